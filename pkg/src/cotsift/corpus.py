"""Corpus data model and streaming JSONL ingestion for reasoning-trace records.

A corpus file holds one JSON record per line. Each record carries a question,
the teacher model's raw response (optionally opening with a <think>...</think>
block), and provenance metadata. Parsing splits the response into the
intermediate reasoning trace and the final answer; serialization is canonical
(UTF-8, sorted keys, compact separators) so written corpora diff cleanly and
round-trip byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DuplicateId, MalformedJson, MissingField, UnclosedThink

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"

REQUIRED_FIELDS = ("id", "question", "raw_response")
_OPTIONAL_FIELDS = ("reference_answer", "teacher_model", "source", "meta")


def word_count(text: str) -> int:
    """Number of maximal whitespace-separated tokens."""
    return len(text.split())


def split_response(raw_response: str) -> tuple[str, str]:
    """Split a teacher response into (think_text, answer_text).

    A think block is recognized only when the response opens with the literal
    open tag; the first close tag after it ends the block (nested tags are not
    supported, the first close wins). Everything after the close tag, with
    leading whitespace trimmed, is the answer. Responses without a leading
    think block come back unchanged as pure answer text.

    Raises UnclosedThink when the open tag is never closed.
    """
    if not raw_response.startswith(THINK_OPEN):
        return "", raw_response
    close = raw_response.find(THINK_CLOSE, len(THINK_OPEN))
    if close < 0:
        raise UnclosedThink("think block opened but never closed")
    think = raw_response[len(THINK_OPEN) : close]
    answer = raw_response[close + len(THINK_CLOSE) :].lstrip()
    return think, answer


def join_response(think_text: str, answer_text: str) -> str:
    """Inverse of split_response for the canonical no-separator form."""
    if not think_text:
        return answer_text
    return f"{THINK_OPEN}{think_text}{THINK_CLOSE}{answer_text}"


@dataclass
class ReasoningExample:
    """One (question, reasoning trace, final answer) record plus provenance."""

    id: str
    question: str
    raw_response: str
    think_text: str = ""
    answer_text: str = ""
    reference_answer: str | None = None
    teacher_model: str | None = None
    source: str | None = None
    meta: dict | None = None
    # Unknown input fields, preserved verbatim for lossless round-trips.
    extra: dict = field(default_factory=dict)
    unclosed_think: bool = False

    @property
    def has_think(self) -> bool:
        return bool(self.think_text)


def parse_record(line: str) -> ReasoningExample:
    """Parse one JSONL line into a ReasoningExample.

    Unknown top-level fields land in the `extra` side-map so that
    serialize_record can reproduce the input exactly. A response whose think
    block never closes is flagged (`unclosed_think`), not rejected; its full
    text is kept as the answer.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"unparseable JSON line: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedJson("record is not a JSON object")
    for name in REQUIRED_FIELDS:
        value = obj.get(name)
        if value is None or value == "":
            raise MissingField(name)
        if not isinstance(value, str):
            raise MalformedJson(f"field {name!r} is not a string")

    example = ReasoningExample(
        id=obj["id"],
        question=obj["question"],
        raw_response=obj["raw_response"],
        reference_answer=obj.get("reference_answer"),
        teacher_model=obj.get("teacher_model"),
        source=obj.get("source"),
        meta=obj.get("meta"),
    )
    consumed = set(REQUIRED_FIELDS) | set(_OPTIONAL_FIELDS)
    example.extra = {k: v for k, v in obj.items() if k not in consumed}

    try:
        example.think_text, example.answer_text = split_response(example.raw_response)
    except UnclosedThink:
        example.think_text = ""
        example.answer_text = example.raw_response
        example.unclosed_think = True
    return example


def serialize_record(example: ReasoningExample) -> str:
    """Canonical single-line JSON for a record (sorted keys, UTF-8)."""
    obj: dict = {
        "id": example.id,
        "question": example.question,
        "raw_response": example.raw_response,
    }
    for name in _OPTIONAL_FIELDS:
        value = getattr(example, name)
        if value is not None:
            obj[name] = value
    obj.update(example.extra)
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def iter_lines(path: str | Path) -> Iterator[tuple[int, str]]:
    """Yield (line_no, line) for non-empty lines, in file order."""
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.rstrip("\n")
            if stripped.strip():
                yield line_no, stripped


def read_corpus(path: str | Path) -> Iterator[ReasoningExample]:
    """Stream a corpus file strictly: any malformed record raises.

    Iteration order equals file order; id uniqueness is verified in the same
    pass.
    """
    seen: set[str] = set()
    for line_no, line in iter_lines(path):
        try:
            example = parse_record(line)
        except (MalformedJson, MissingField) as exc:
            raise type(exc)(f"line {line_no}: {exc}") from None
        if example.id in seen:
            raise DuplicateId(f"line {line_no}: duplicate id {example.id!r}")
        seen.add(example.id)
        yield example


def load_corpus(path: str | Path) -> list[ReasoningExample]:
    return list(read_corpus(path))


def write_corpus(path: str | Path, examples: Iterable[ReasoningExample]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(serialize_record(example) + "\n")
            count += 1
    return count


@dataclass
class RejectEntry:
    id: str
    reason: str
    line_no: int

    def to_dict(self) -> dict:
        return {"id": self.id, "reason": self.reason, "line_no": self.line_no}


@dataclass
class ValidationReport:
    total: int = 0
    ok: int = 0
    rejected: list[RejectEntry] = field(default_factory=list)
    flagged: list[RejectEntry] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "total": self.total,
            "ok": self.ok,
            "rejected": len(self.rejected),
            "flagged": len(self.flagged),
        }


def validate_corpus(
    path: str | Path, reject_path: str | Path | None = None
) -> tuple[list[ReasoningExample], ValidationReport]:
    """Validate a corpus file, quarantining bad records instead of aborting.

    Rejected (dropped) reasons: malformed_json, missing_field:<name>,
    duplicate_id. Flagged (kept) reasons: unclosed_think, empty_answer —
    flagged records stay in the corpus but are not admitted to selection.
    The optional reject file records both kinds as JSONL {id, reason, line_no}.
    """
    report = ValidationReport()
    examples: list[ReasoningExample] = []
    seen: set[str] = set()
    for line_no, line in iter_lines(path):
        report.total += 1
        try:
            example = parse_record(line)
        except MissingField as exc:
            report.rejected.append(RejectEntry("", f"missing_field:{exc}", line_no))
            continue
        except MalformedJson:
            report.rejected.append(RejectEntry("", "malformed_json", line_no))
            continue
        if example.id in seen:
            report.rejected.append(RejectEntry(example.id, "duplicate_id", line_no))
            continue
        seen.add(example.id)
        if example.unclosed_think:
            report.flagged.append(RejectEntry(example.id, "unclosed_think", line_no))
        if not example.answer_text:
            report.flagged.append(RejectEntry(example.id, "empty_answer", line_no))
        examples.append(example)
        report.ok += 1

    if reject_path is not None:
        with open(reject_path, "w", encoding="utf-8") as handle:
            for entry in report.rejected + report.flagged:
                handle.write(
                    json.dumps(entry.to_dict(), ensure_ascii=False, sort_keys=True) + "\n"
                )
    return examples, report


def selectable(examples: Iterable[ReasoningExample]) -> list[ReasoningExample]:
    """Records admitted to selection: non-empty final answer."""
    return [ex for ex in examples if ex.answer_text]
