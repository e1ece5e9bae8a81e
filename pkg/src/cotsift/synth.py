"""Synthetic corpus and stub-response generation for offline runs and tests.

The generator fabricates reasoning records with realistic spread in trace
length, strategy counts, verbosity, domains, and agreement, plus the stub
endpoint files the annotate/judge/embed commands need to run with no
network. Everything is a deterministic function of the seed.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .corpus import ReasoningExample, join_response, write_corpus
from .taxonomy import load_taxonomy

_WORDS = (
    "force tension gravity circle motion vector prime integer series entropy "
    "voltage gradient matrix proof lemma orbit enzyme lattice signal torque "
    "momentum charge field wave particle limit derivative integral modulus "
    "angle radius velocity energy state phase bond cell tissue market supply"
).split()

STRATEGY_POOL = (
    "analysis",
    "calculation",
    "self-verification",
    "exploration",
    "backtracking",
    "synthesis",
    "explanation",
    "discussion",
    "generalization",
    "decomposition",
    "analogy",
    "case-analysis",
    "estimation",
    "abstraction",
    "enumeration",
    "substitution",
    "visualization",
    "reformulation",
    "elimination",
    "induction",
)


def _words(rng: np.random.Generator, count: int) -> str:
    return " ".join(rng.choice(_WORDS, size=count))


def make_examples(n: int, seed: int) -> list[ReasoningExample]:
    """Fabricate n well-formed records with a long-tailed trace-length mix."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        # lognormal-ish token counts so short traces dominate, as in real dumps
        trace_len = int(min(6000, math.exp(rng.normal(5.5, 1.0))))
        think = _words(rng, max(5, trace_len))
        answer = _words(rng, int(rng.integers(10, 80)))
        reference = _words(rng, int(rng.integers(1, 16)))
        question = f"Q{i:06d}: " + _words(rng, int(rng.integers(8, 30))) + "?"
        examples.append(
            ReasoningExample(
                id=f"ex{i:06d}",
                question=question,
                raw_response=join_response(think, answer),
                think_text=think,
                answer_text=answer,
                reference_answer=reference,
                teacher_model="synthetic-teacher",
                source="synthetic",
            )
        )
    return examples


def _annotation_payload(rng: np.random.Generator) -> str:
    """A plausible judge response: fenced JSON with per-step strategies."""
    step_count = int(rng.integers(1, 15))
    strategy_count = int(np.clip(rng.normal(6.0, 2.5), 0, 14))
    chosen = list(rng.choice(len(STRATEGY_POOL), size=strategy_count, replace=False))
    steps = []
    for s in range(step_count):
        if chosen:
            take = rng.integers(1, min(4, len(chosen)) + 1)
            picks = rng.choice(len(chosen), size=take, replace=False)
            names = [STRATEGY_POOL[chosen[p]] for p in picks]
        else:
            names = []
        steps.append({"step": f"step {s + 1}", "strategies": names})
    # make sure every chosen strategy is mentioned at least once
    if chosen and steps:
        missing = [STRATEGY_POOL[c] for c in chosen]
        steps[0]["strategies"] = sorted(set(steps[0]["strategies"]) | set(missing))
    payload = {"steps": steps, "verbosity_score": int(rng.integers(0, 11))}
    return "```json\n" + json.dumps(payload) + "\n```"


def _domain_payload(rng: np.random.Generator) -> str:
    taxonomy = load_taxonomy()
    disciplines = list(taxonomy)
    discipline = disciplines[int(rng.integers(len(disciplines)))]
    fields = list(taxonomy[discipline])
    field = fields[int(rng.integers(len(fields)))]
    subs = taxonomy[discipline][field]
    sub_field = subs[int(rng.integers(len(subs)))]
    payload = {"discipline": discipline, "field": field, "sub_field": sub_field}
    return "Labeling complete.\n```json\n" + json.dumps(payload) + "\n```"


def write_stub_dir(
    examples: list[ReasoningExample],
    stub_dir: str | Path,
    seed: int,
    *,
    disagree_fraction: float = 0.36,
    embedding_dim: int = 64,
    embedding_centers: int = 12,
) -> None:
    """Write stub endpoint files covering every record in `examples`."""
    stub = Path(stub_dir)
    stub.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 11])

    with open(stub / "annotate_reasoning.jsonl", "w", encoding="utf-8") as handle:
        for example in examples:
            row = {"key": example.id, "content": _annotation_payload(rng)}
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")

    with open(stub / "annotate_domain.jsonl", "w", encoding="utf-8") as handle:
        for example in examples:
            row = {"key": example.id, "content": _domain_payload(rng)}
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")

    with open(stub / "judge.jsonl", "w", encoding="utf-8") as handle:
        for example in examples:
            disagree = bool(rng.random() < disagree_fraction)
            verdict = "DISAGREE" if disagree else "AGREE"
            row = {"key": example.id, "content": f"{verdict}\nstub verdict"}
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")

    spec = {"dim": embedding_dim, "seed": seed, "centers": embedding_centers, "spread": 0.12}
    (stub / "embeddings.json").write_text(json.dumps(spec, sort_keys=True) + "\n", "utf-8")


def write_alt_answers(
    examples: list[ReasoningExample], path: str | Path, seed: int
) -> None:
    """Alternate-model answers for the agreement judge; always textually
    distinct from the teacher answer so the judge stub decides the verdict."""
    rng = np.random.default_rng([seed, 13])
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            alt = _words(rng, int(rng.integers(5, 40))) + " (alt)"
            handle.write(json.dumps({"id": example.id, "answer": alt}) + "\n")


def generate(
    out_dir: str | Path,
    n: int,
    seed: int,
    *,
    disagree_fraction: float = 0.36,
    embedding_dim: int = 64,
) -> dict:
    """Generate corpus.jsonl, alt_answers.jsonl, and stubs/ under `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    examples = make_examples(n, seed)
    corpus_path = out / "corpus.jsonl"
    write_corpus(corpus_path, examples)
    write_alt_answers(examples, out / "alt_answers.jsonl", seed)
    write_stub_dir(
        examples,
        out / "stubs",
        seed,
        disagree_fraction=disagree_fraction,
        embedding_dim=embedding_dim,
    )
    return {
        "corpus": str(corpus_path),
        "alt_answers": str(out / "alt_answers.jsonl"),
        "stub_dir": str(out / "stubs"),
        "n": n,
        "seed": seed,
    }
