"""Mixed System-1/System-2 SFT dataset construction and export.

System-2 examples supervise the full teacher response (think block plus final
answer); System-1 examples supervise the condensed final answer only. Each
prompt is the question plus an appended instruction carrying a word budget K
derived from the target text. Export is JSONL with a character-offset loss
mask boundary, leaving tokenization to the trainer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .annotator import AGREE, DISAGREE, AnnotationSet, annotations_by_id
from .corpus import THINK_OPEN, ReasoningExample, word_count
from .errors import BadConfig, EmptyAnswer, EmptyThink, MissingVerdict

SYSTEM1 = "system1"
SYSTEM2 = "system2"

SYSTEM2_INSTRUCTION = "Think carefully before answering. Use about {K} words."
SYSTEM1_INSTRUCTION = "Answer directly without thinking. Use about {K} words."
THINK_MODE_INSTRUCTION = SYSTEM2_INSTRUCTION
NO_THINK_INSTRUCTION = "Answer directly without thinking."
ADAPTIVE_INSTRUCTION = "Think carefully before answering."

INFERENCE_MODES = ("no_think", "think", "adaptive_think")

# average System-2 response length in the training data; default budget for
# forced-think inference prompts
DEFAULT_THINK_BUDGET = 3500

DEFAULT_BUDGET_GRANULARITY = 100
DEFAULT_MAX_TARGET_UNITS = 16384

MIX_SCHEMES = ("pure_s1", "pure_s2", "random", "difficulty")


@dataclass
class TrainingExample:
    """One exported SFT record; the loss mask boundary is a character offset
    into prompt_text + target_text."""

    example_id: str
    prompt_text: str
    target_text: str
    mode: str
    word_budget_K: int
    loss_mask_boundary: int

    def to_dict(self) -> dict:
        return {
            "id": self.example_id,
            "prompt": self.prompt_text,
            "target": self.target_text,
            "mode": self.mode,
            "K": self.word_budget_K,
            "loss_mask_boundary": self.loss_mask_boundary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingExample":
        return cls(
            example_id=data["id"],
            prompt_text=data["prompt"],
            target_text=data["target"],
            mode=data["mode"],
            word_budget_K=int(data["K"]),
            loss_mask_boundary=int(data["loss_mask_boundary"]),
        )


@dataclass
class MixParams:
    scheme: str
    p_system2: float = 0.0
    seed: int = 0
    granularity: int = DEFAULT_BUDGET_GRANULARITY

    def __post_init__(self) -> None:
        if self.scheme not in MIX_SCHEMES:
            raise BadConfig(f"unknown mix scheme {self.scheme!r}")
        if not 0.0 <= self.p_system2 <= 1.0:
            raise BadConfig("p_system2 must be in [0, 1]")
        if self.granularity < 1:
            raise BadConfig("granularity must be >= 1")


def derive_word_budget(
    example: ReasoningExample, mode: str, granularity: int = DEFAULT_BUDGET_GRANULARITY
) -> int:
    """Word budget K: target word count rounded to the nearest multiple of
    `granularity`, never below one granularity step."""
    if mode == SYSTEM2:
        words = word_count(example.think_text) + word_count(example.answer_text)
    elif mode == SYSTEM1:
        words = word_count(example.answer_text)
    else:
        raise BadConfig(f"unknown mode {mode!r}")
    rounded = int(words / granularity + 0.5) * granularity
    return max(granularity, rounded)


def _prompt(question: str, instruction: str, k: int) -> str:
    return question + "\n" + instruction.replace("{K}", str(k))


def make_system2_example(
    example: ReasoningExample,
    k: int | None = None,
    granularity: int = DEFAULT_BUDGET_GRANULARITY,
) -> TrainingExample:
    """Full-reasoning training example: the target is the teacher's entire
    think-delimited response."""
    if not example.think_text:
        raise EmptyThink(f"record {example.id} has no reasoning trace")
    if k is None:
        k = derive_word_budget(example, SYSTEM2, granularity)
    prompt = _prompt(example.question, SYSTEM2_INSTRUCTION, k)
    target = example.raw_response
    return TrainingExample(
        example_id=example.id,
        prompt_text=prompt,
        target_text=target,
        mode=SYSTEM2,
        word_budget_K=k,
        loss_mask_boundary=len(prompt),
    )


def make_system1_example(
    example: ReasoningExample,
    k: int | None = None,
    granularity: int = DEFAULT_BUDGET_GRANULARITY,
) -> TrainingExample:
    """Condensed training example: the target is the final answer only."""
    if not example.answer_text:
        raise EmptyAnswer(f"record {example.id} has no final answer")
    if k is None:
        k = derive_word_budget(example, SYSTEM1, granularity)
    prompt = _prompt(example.question, SYSTEM1_INSTRUCTION, k)
    return TrainingExample(
        example_id=example.id,
        prompt_text=prompt,
        target_text=example.answer_text,
        mode=SYSTEM1,
        word_budget_K=k,
        loss_mask_boundary=len(prompt),
    )


def mix_random(
    examples: Sequence[ReasoningExample], params: MixParams
) -> list[TrainingExample]:
    """Per-example seeded Bernoulli(p_system2) choice of constructor."""
    ordered = sorted(examples, key=lambda ex: ex.id)
    rng = np.random.default_rng(params.seed)
    draws = rng.random(len(ordered))
    dataset = []
    for example, u in zip(ordered, draws):
        if u < params.p_system2:
            dataset.append(make_system2_example(example, granularity=params.granularity))
        else:
            dataset.append(make_system1_example(example, granularity=params.granularity))
    return dataset


def mix_by_difficulty(
    examples: Sequence[ReasoningExample],
    annotations: Sequence[AnnotationSet],
    granularity: int = DEFAULT_BUDGET_GRANULARITY,
) -> list[TrainingExample]:
    """Disagree-labeled (hard) records get full System-2 supervision; the
    rest get the condensed System-1 response. The realized System-2 fraction
    therefore equals the corpus disagree fraction exactly."""
    by_id = annotations_by_id(annotations)
    dataset = []
    for example in sorted(examples, key=lambda ex: ex.id):
        annotation = by_id.get(example.id)
        if annotation is None or annotation.agreement not in (AGREE, DISAGREE):
            raise MissingVerdict(f"record {example.id} has no agreement verdict")
        if annotation.agreement == DISAGREE:
            dataset.append(make_system2_example(example, granularity=granularity))
        else:
            dataset.append(make_system1_example(example, granularity=granularity))
    return dataset


def build_mixed_dataset(
    examples: Sequence[ReasoningExample],
    params: MixParams,
    annotations: Sequence[AnnotationSet] | None = None,
) -> list[TrainingExample]:
    ordered = sorted(examples, key=lambda ex: ex.id)
    if params.scheme == "pure_s2":
        return [make_system2_example(ex, granularity=params.granularity) for ex in ordered]
    if params.scheme == "pure_s1":
        return [make_system1_example(ex, granularity=params.granularity) for ex in ordered]
    if params.scheme == "random":
        return mix_random(ordered, params)
    if annotations is None:
        raise MissingVerdict("difficulty mixing requires agreement annotations")
    return mix_by_difficulty(ordered, annotations, granularity=params.granularity)


def system2_fraction(dataset: Sequence[TrainingExample]) -> float:
    if not dataset:
        return 0.0
    return sum(1 for ex in dataset if ex.mode == SYSTEM2) / len(dataset)


def mean_system2_budget(dataset: Sequence[TrainingExample]) -> float:
    budgets = [ex.word_budget_K for ex in dataset if ex.mode == SYSTEM2]
    return float(np.mean(budgets)) if budgets else 0.0


def filter_max_length(
    dataset: Sequence[TrainingExample],
    max_units: int = DEFAULT_MAX_TARGET_UNITS,
    counter: Callable[[str], int] = word_count,
) -> tuple[list[TrainingExample], int]:
    """Drop (never truncate) examples whose target exceeds `max_units` under
    the pluggable unit counter; returns (kept, drop_count)."""
    if max_units <= 0:
        raise BadConfig("max_units must be positive")
    kept = [ex for ex in dataset if counter(ex.target_text) <= max_units]
    return kept, len(dataset) - len(kept)


def build_inference_prompt(
    question: str, mode: str, k: int = DEFAULT_THINK_BUDGET
) -> str:
    """Inference-time prompt for the three reasoning modes.

    no_think instructs a direct answer; think adds the budgeted reasoning
    instruction and appends the think open delimiter to force a full trace;
    adaptive_think instructs careful thought but leaves the delimiter off so
    the model chooses its own mode.
    """
    if mode == "no_think":
        return question + "\n" + NO_THINK_INSTRUCTION
    if mode == "think":
        return _prompt(question, THINK_MODE_INSTRUCTION, k) + "\n" + THINK_OPEN
    if mode == "adaptive_think":
        return question + "\n" + ADAPTIVE_INSTRUCTION
    raise BadConfig(f"unknown inference mode {mode!r}")


def export_dataset(path: str | Path, dataset: Iterable[TrainingExample]) -> int:
    """Write training examples as canonical JSONL sorted by example id."""
    rows = sorted(dataset, key=lambda ex: ex.example_id)
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    return len(rows)


def load_dataset(path: str | Path) -> list[TrainingExample]:
    dataset = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                dataset.append(TrainingExample.from_dict(json.loads(line)))
    return dataset
