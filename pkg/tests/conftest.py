"""Shared fixtures and fakes for the test suite."""

from __future__ import annotations

import json

import numpy as np
import pytest

from cotsift.annotator import AnnotationSet
from cotsift.corpus import ReasoningExample, join_response


def make_example(
    example_id: str = "a1",
    question: str = "What is 2+2?",
    think: str = "let me think",
    answer: str = "4",
    reference: str | None = "4",
    **kwargs,
) -> ReasoningExample:
    return ReasoningExample(
        id=example_id,
        question=question,
        raw_response=join_response(think, answer),
        think_text=think,
        answer_text=answer,
        reference_answer=reference,
        **kwargs,
    )


def make_annotation(example_id: str = "a1", **kwargs) -> AnnotationSet:
    return AnnotationSet(example_id=example_id, **kwargs)


class FakeChatClient:
    """Programmable chat stub: responses keyed by (task, key), with optional
    scripted failures and a call log."""

    def __init__(self, responses: dict | None = None, default: str | None = None):
        self.responses = responses or {}
        self.default = default
        self.calls: list[tuple[str, str | None, str]] = []
        self.fail_keys: set = set()
        self.fail_after: int | None = None
        self.failure_exc: Exception | None = None

    def complete(self, messages, *, task: str = "chat", key: str | None = None) -> str:
        from cotsift.errors import JudgeUnavailable

        if self.fail_after is not None and len(self.calls) >= self.fail_after:
            raise RuntimeError("interrupted")
        self.calls.append((task, key, messages[-1]["content"]))
        if (task, key) in self.fail_keys or key in self.fail_keys:
            if self.failure_exc is not None:
                raise self.failure_exc
            raise JudgeUnavailable(f"scripted failure for {key}")
        if (task, key) in self.responses:
            return self.responses[(task, key)]
        if key in self.responses:
            return self.responses[key]
        if self.default is not None:
            return self.default
        raise JudgeUnavailable(f"no scripted response for task={task} key={key}")


class FakeEmbeddingClient:
    """Embedding stub returning fixed or hash-derived vectors."""

    def __init__(self, dim: int = 8, vectors: dict[str, list[float]] | None = None):
        self.dim = dim
        self.vectors = vectors or {}
        self.calls = 0
        self.fail_batches: set[int] = set()

    def embed(self, texts):
        from cotsift.errors import EmbeddingUnavailable

        batch_no = self.calls
        self.calls += 1
        if batch_no in self.fail_batches:
            raise EmbeddingUnavailable(f"scripted batch failure {batch_no}")
        out = []
        for text in texts:
            if text in self.vectors:
                out.append(self.vectors[text])
            else:
                rng = np.random.default_rng(abs(hash((text, self.dim))) % (2**32))
                out.append(rng.standard_normal(self.dim).tolist())
        return out


STRATEGY_JSON = {
    "steps": [
        {"step": "read the problem", "strategies": ["analysis"]},
        {"step": "try a formula", "strategies": ["calculation", "exploration"]},
        {"step": "check it", "strategies": ["self-verification"]},
    ],
    "verbosity_score": 3,
}


def strategy_response(payload: dict | None = None) -> str:
    body = json.dumps(payload if payload is not None else STRATEGY_JSON)
    return f"Here is my annotation.\n```json\n{body}\n```\nDone."


def domain_response(discipline="Science", field="Mathematics", sub_field="Number Theory") -> str:
    body = json.dumps({"discipline": discipline, "field": field, "sub_field": sub_field})
    return f"```json\n{body}\n```"


@pytest.fixture
def fake_chat():
    return FakeChatClient()
