"""cotsift: curation engine for reasoning-distillation corpora.

Annotates (question, reasoning trace, answer) records with domains,
meta-reasoning strategies, verbosity, and model-agreement labels; selects
training subsets along diversity and difficulty axes; and exports mixed
System-1/System-2 SFT datasets with instruction augmentation.
"""

__version__ = "0.1.0"
