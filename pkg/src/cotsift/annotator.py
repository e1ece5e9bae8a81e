"""Annotation of reasoning records: strategies, verbosity, domain, agreement.

Prompt builders are pure and byte-deterministic; the templates live in
package data and are substituted with simple slot replacement. Parsers are
total over arbitrary judge output: they either return a value or raise a
typed error, never crash. `annotate_corpus` drives a pluggable chat client
with bounded parallelism, a resumable checkpoint, and a failure-rate abort.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .client import ChatClient, JudgeConfig
from .corpus import ReasoningExample, word_count
from .errors import (
    FailureThresholdExceeded,
    JudgeUnavailable,
    MissingVerbosity,
    NoJsonFound,
    UnparseableVerdict,
)
from .taxonomy import UNLABELED, format_taxonomy_literal, is_valid_path

logger = logging.getLogger(__name__)

AGREE = "agree"
DISAGREE = "disagree"
UNKNOWN = "unknown"

VERBOSITY_MIN = 0
VERBOSITY_MAX = 10

# Bump when the repo-defined agreement prompt changes; recorded in manifests.
AGREEMENT_PROMPT_VERSION = 1

_STRATEGY_KEYS = {
    "strategies",
    "strategy",
    "meta_reasoning_strategies",
    "meta_reasoning_strategy",
    "meta_reasoning",
    "reasoning_strategies",
    "reasoning_strategy",
}
_STEPS_KEYS = {"steps", "step_annotations", "detailed_steps", "annotated_steps"}


def _data_text(name: str) -> str:
    return resources.files("cotsift").joinpath(f"_data/{name}").read_text("utf-8")


def _strategy_template() -> str:
    return _data_text("annotate_reasoning_prompt.txt").rstrip("\n")


def _agreement_template() -> str:
    return _data_text("judge_agreement_prompt.txt").rstrip("\n")


_DOMAIN_PROMPT_HEAD = (
    "You are an expert in labeling questions into categories. \n"
    "\n"
    "For a given question, use the following taxonomy for labelling, which is "
    "structured as {'discipline': {'field': ['sub-field', 'sub-field', ...]}}. \n"
    "\n"
)

_DOMAIN_PROMPT_TAIL = (
    "\n"
    "First, identify the most appropriate discipline. Then identify the most "
    "appropriate filed within the chosen discipline. Finally, identify the most "
    "appropriate sub-filed.\n"
    "\n"
    "Put your final labelling results in a json object:\n"
    "```\n"
    "{\n"
    '   "discipline": <choose the most appropriate discipline>, \n'
    '   "field": <choose the most appropriate field within the discipline>, \n'
    '    "sub_field": <choose the most appropriate sub_field within the field>\n'
    "}\n"
    "```\n"
    "\n"
    "Under no circumstances use enumeration and do not give more than 1 "
    "discipline, 1 field and 1 sub-field and do not use any labels that are "
    "not in above dictionary. \n"
    "\n"
    "### Question\n"
)


def build_strategy_prompt(example: ReasoningExample) -> str:
    """Prompt asking the judge to annotate per-step strategies and verbosity.

    The {question} and {reasoning trace} slots take the record's question and
    think-block interior; an example without a think block gets an empty
    trace slot.
    """
    template = _strategy_template()
    return template.replace("{question}", example.question).replace(
        "{reasoning trace}", example.think_text
    )


@lru_cache(maxsize=1)
def _domain_prompt_base() -> str:
    return _DOMAIN_PROMPT_HEAD + format_taxonomy_literal() + _DOMAIN_PROMPT_TAIL


def build_domain_prompt(question: str) -> str:
    """Taxonomy-labeling prompt with the question appended after '### Question'."""
    return _domain_prompt_base() + question


def build_agreement_prompt(question: str, answer_a: str, answer_b: str) -> str:
    template = _agreement_template()
    return (
        template.replace("{question}", question)
        .replace("{answer_a}", answer_a)
        .replace("{answer_b}", answer_b)
    )


def _balanced_candidates(text: str):
    """Yield balanced {...} substrings, scanning from each open brace."""
    start = text.find("{")
    while start >= 0:
        depth = 0
        in_string = False
        escaped = False
        for pos in range(start, len(text)):
            ch = text[pos]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield text[start : pos + 1]
                    break
        start = text.find("{", start + 1)


def extract_json_object(text: str) -> dict:
    """First parseable JSON object in `text`, fenced code blocks preferred.

    Raises NoJsonFound when no balanced {...} region parses as an object.
    """
    fence = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL | re.IGNORECASE)
    regions = [fence.group(1), text] if fence else [text]
    for region in regions:
        for candidate in _balanced_candidates(region):
            try:
                obj = json.loads(candidate)
            except json.JSONDecodeError:
                continue
            if isinstance(obj, dict):
                return obj
    raise NoJsonFound("no parseable JSON object in model output")


def _collect_strategies(node, found: list[str]) -> None:
    if isinstance(node, dict):
        for key, value in node.items():
            normalized = str(key).strip().lower().replace("-", "_").replace(" ", "_")
            if normalized in _STRATEGY_KEYS:
                if isinstance(value, str):
                    found.append(value)
                elif isinstance(value, list):
                    found.extend(v for v in value if isinstance(v, str))
            else:
                _collect_strategies(value, found)
    elif isinstance(node, list):
        for item in node:
            _collect_strategies(item, found)


def _clamp_verbosity(value) -> tuple[int, bool]:
    try:
        score = int(round(float(value)))
    except (TypeError, ValueError):
        raise MissingVerbosity(f"verbosity_score {value!r} is not numeric") from None
    clamped = min(VERBOSITY_MAX, max(VERBOSITY_MIN, score))
    return clamped, clamped != score


def parse_strategy_annotation(model_output: str) -> tuple[list[str], int, int]:
    """Extract (strategies, step_count, verbosity) from judge output.

    Strategy names are gathered across per-step annotations, lowercased, and
    deduplicated preserving first occurrence. Step count is the length of the
    top-level steps array. Verbosity is clamped into [0, 10] with a warning.
    """
    obj = extract_json_object(model_output)

    steps = None
    for key, value in obj.items():
        normalized = str(key).strip().lower().replace("-", "_").replace(" ", "_")
        if normalized in _STEPS_KEYS and isinstance(value, list):
            steps = value
            break
    step_count = len(steps) if steps is not None else 0

    raw_names: list[str] = []
    _collect_strategies(obj, raw_names)
    strategies: list[str] = []
    seen: set[str] = set()
    for name in raw_names:
        cleaned = name.strip().lower()
        if cleaned and cleaned not in seen:
            seen.add(cleaned)
            strategies.append(cleaned)

    if "verbosity_score" not in obj:
        raise MissingVerbosity("annotation JSON lacks verbosity_score")
    verbosity, was_clamped = _clamp_verbosity(obj["verbosity_score"])
    if was_clamped:
        logger.warning("verbosity_score %r clamped to %d", obj["verbosity_score"], verbosity)
    return strategies, step_count, verbosity


def parse_domain_annotation(model_output: str) -> tuple[str, str, str]:
    """Extract a (discipline, field, sub_field) triple, validated against the
    embedded taxonomy. Invalid paths map to the `unlabeled` sentinel."""
    obj = extract_json_object(model_output)
    discipline = str(obj.get("discipline", "")).strip()
    field = str(obj.get("field", "")).strip()
    sub_field = str(obj.get("sub_field", obj.get("sub-field", obj.get("subfield", "")))).strip()
    if is_valid_path(discipline, field, sub_field):
        return discipline, field, sub_field
    logger.warning(
        "invalid taxonomy path (%r, %r, %r); using %r", discipline, field, sub_field, UNLABELED
    )
    return UNLABELED, UNLABELED, UNLABELED


@dataclass
class AgreementVerdict:
    example_id: str
    verdict: str  # agree | disagree
    judge_rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "verdict": self.verdict,
            "judge_rationale": self.judge_rationale,
        }


_VERDICT_TOKEN = re.compile(r"\b(DISAGREE|AGREE)\b", re.IGNORECASE)


def judge_agreement(
    question: str,
    answer_a: str,
    answer_b: str,
    client: ChatClient,
    *,
    example_id: str = "",
) -> AgreementVerdict:
    """Judge whether two final answers are equivalent for the question.

    Identical answer strings short-circuit to `agree` without a judge call.
    The judge output must contain an AGREE/DISAGREE token; anything else
    raises UnparseableVerdict.
    """
    if not answer_a or not answer_b:
        raise ValueError("judge_agreement requires two non-empty answers")
    if answer_a.strip() == answer_b.strip():
        return AgreementVerdict(example_id, AGREE, "identical answer strings")

    prompt = build_agreement_prompt(question, answer_a, answer_b)
    output = client.complete(
        [{"role": "user", "content": prompt}], task="judge", key=example_id or None
    )
    match = _VERDICT_TOKEN.search(output)
    if match is None:
        raise UnparseableVerdict("judge output lacks an AGREE/DISAGREE token")
    verdict = AGREE if match.group(1).upper() == "AGREE" else DISAGREE
    rationale = output[match.end() :].strip()
    return AgreementVerdict(example_id, verdict, rationale)


@dataclass
class AnnotationSet:
    """Per-example labels produced by the annotation and judging passes."""

    example_id: str
    discipline: str = UNLABELED
    field: str = UNLABELED
    sub_field: str = UNLABELED
    strategies: list[str] = dataclass_field(default_factory=list)
    step_count: int = 0
    verbosity: int = 0
    agreement: str = UNKNOWN
    think_token_len: int = 0
    answer_word_len: int = 0

    def __post_init__(self) -> None:
        if not VERBOSITY_MIN <= self.verbosity <= VERBOSITY_MAX:
            raise ValueError(f"verbosity {self.verbosity} outside [0, 10]")
        # unique-strategy set semantics, order preserved
        seen: set[str] = set()
        self.strategies = [s for s in self.strategies if not (s in seen or seen.add(s))]

    @property
    def strategy_count(self) -> int:
        return len(self.strategies)

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "discipline": self.discipline,
            "field": self.field,
            "sub_field": self.sub_field,
            "strategies": self.strategies,
            "step_count": self.step_count,
            "verbosity": self.verbosity,
            "agreement": self.agreement,
            "think_token_len": self.think_token_len,
            "answer_word_len": self.answer_word_len,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationSet":
        return cls(
            example_id=data["example_id"],
            discipline=data.get("discipline", UNLABELED),
            field=data.get("field", UNLABELED),
            sub_field=data.get("sub_field", UNLABELED),
            strategies=list(data.get("strategies", [])),
            step_count=int(data.get("step_count", 0)),
            verbosity=int(data.get("verbosity", 0)),
            agreement=data.get("agreement", UNKNOWN),
            think_token_len=int(data.get("think_token_len", 0)),
            answer_word_len=int(data.get("answer_word_len", 0)),
        )


def save_annotations(path: str | Path, annotations: Iterable[AnnotationSet]) -> int:
    """Write annotations as JSONL sorted by example_id (order-normalized)."""
    rows = sorted(annotations, key=lambda a: a.example_id)
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    return len(rows)


def load_annotations(path: str | Path) -> list[AnnotationSet]:
    annotations = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                annotations.append(AnnotationSet.from_dict(json.loads(line)))
    return annotations


def annotations_by_id(annotations: Iterable[AnnotationSet]) -> dict[str, AnnotationSet]:
    return {a.example_id: a for a in annotations}


@dataclass
class AnnotateReport:
    total: int = 0
    ok: int = 0
    failed: int = 0
    resumed: int = 0

    def to_dict(self) -> dict:
        return {"total": self.total, "ok": self.ok, "failed": self.failed, "resumed": self.resumed}


def _annotate_one(
    example: ReasoningExample,
    client: ChatClient,
    token_counter: Callable[[str], int],
) -> tuple[AnnotationSet, bool]:
    """Annotate a single record; returns (annotation, failed)."""
    annotation = AnnotationSet(
        example_id=example.id,
        think_token_len=token_counter(example.think_text),
        answer_word_len=word_count(example.answer_text),
    )
    failed = False

    try:
        prompt = build_strategy_prompt(example)
        output = client.complete(
            [{"role": "user", "content": prompt}], task="annotate_reasoning", key=example.id
        )
        strategies, step_count, verbosity = parse_strategy_annotation(output)
        annotation.strategies = strategies
        annotation.step_count = step_count
        annotation.verbosity = verbosity
    except (JudgeUnavailable, NoJsonFound, MissingVerbosity) as exc:
        logger.warning("strategy annotation failed for %s: %s", example.id, exc)
        failed = True

    try:
        prompt = build_domain_prompt(example.question)
        output = client.complete(
            [{"role": "user", "content": prompt}], task="annotate_domain", key=example.id
        )
        annotation.discipline, annotation.field, annotation.sub_field = parse_domain_annotation(
            output
        )
    except (JudgeUnavailable, NoJsonFound) as exc:
        logger.warning("domain annotation failed for %s: %s", example.id, exc)
        failed = True

    return annotation, failed


def annotate_corpus(
    examples: Sequence[ReasoningExample],
    client: ChatClient,
    config: JudgeConfig,
    out_path: str | Path,
    *,
    failure_threshold: float = 0.1,
    token_counter: Callable[[str], int] = word_count,
) -> AnnotateReport:
    """Annotate every record, writing the result sorted by example id.

    Completed annotations are appended to ``<out>.partial`` as they arrive;
    an interrupted run resumes by skipping ids already present there. The
    run aborts with FailureThresholdExceeded as soon as the failure count
    proves the final failure rate must exceed `failure_threshold`.
    """
    out_path = Path(out_path)
    partial_path = out_path.with_suffix(out_path.suffix + ".partial")

    done: dict[str, AnnotationSet] = {}
    if partial_path.exists():
        done = annotations_by_id(load_annotations(partial_path))

    report = AnnotateReport(total=len(examples), resumed=len(done))
    pending = [ex for ex in examples if ex.id not in done]
    # Failed annotations are still written (as unlabeled/empty), so resumed
    # ids do not retry; delete the partial file to redo a poisoned run.
    max_failures = failure_threshold * report.total
    lock = threading.Lock()
    abort = threading.Event()

    def worker(example: ReasoningExample) -> tuple[AnnotationSet, bool] | None:
        if abort.is_set():
            return None
        return _annotate_one(example, client, token_counter)

    with open(partial_path, "a", encoding="utf-8") as partial:
        with ThreadPoolExecutor(max_workers=config.parallelism) as executor:
            futures = {executor.submit(worker, ex): ex for ex in pending}
            for future in as_completed(futures):
                result = future.result()
                if result is None:
                    continue
                annotation, failed = result
                with lock:
                    done[annotation.example_id] = annotation
                    partial.write(
                        json.dumps(annotation.to_dict(), ensure_ascii=False, sort_keys=True) + "\n"
                    )
                    partial.flush()
                    if failed:
                        report.failed += 1
                        if report.failed > max_failures:
                            abort.set()
                    else:
                        report.ok += 1

    if abort.is_set():
        raise FailureThresholdExceeded(
            f"{report.failed}/{report.total} annotations failed; threshold is "
            f"{failure_threshold:.0%}"
        )

    save_annotations(out_path, done.values())
    partial_path.unlink()
    return report


def judge_corpus_agreement(
    examples: Sequence[ReasoningExample],
    alt_answers: dict[str, str],
    client: ChatClient,
    config: JudgeConfig,
    *,
    failure_threshold: float = 0.1,
) -> tuple[list[AgreementVerdict], AnnotateReport]:
    """Run the agreement judge over a corpus against alternate answers.

    Records without an alternate answer or with an unusable judge response
    count as failures and get no verdict (annotation stays `unknown`).
    """
    report = AnnotateReport(total=len(examples))
    max_failures = failure_threshold * report.total
    lock = threading.Lock()
    verdicts: list[AgreementVerdict] = []

    def worker(example: ReasoningExample) -> AgreementVerdict | None:
        alt = alt_answers.get(example.id, "")
        if not alt or not example.answer_text:
            return None
        return judge_agreement(
            example.question, example.answer_text, alt, client, example_id=example.id
        )

    with ThreadPoolExecutor(max_workers=config.parallelism) as executor:
        futures = {executor.submit(worker, ex): ex for ex in examples}
        for future in as_completed(futures):
            example = futures[future]
            try:
                verdict = future.result()
            except (JudgeUnavailable, UnparseableVerdict) as exc:
                logger.warning("agreement judging failed for %s: %s", example.id, exc)
                verdict = None
            with lock:
                if verdict is None:
                    report.failed += 1
                    if report.failed > max_failures:
                        raise FailureThresholdExceeded(
                            f"{report.failed}/{report.total} verdicts failed; threshold is "
                            f"{failure_threshold:.0%}"
                        )
                else:
                    verdicts.append(verdict)
                    report.ok += 1

    verdicts.sort(key=lambda v: v.example_id)
    return verdicts, report


def apply_verdicts(
    annotations: Sequence[AnnotationSet], verdicts: Iterable[AgreementVerdict]
) -> int:
    """Merge agreement verdicts into annotations in place; returns hit count."""
    by_id = annotations_by_id(annotations)
    hits = 0
    for verdict in verdicts:
        annotation = by_id.get(verdict.example_id)
        if annotation is not None:
            annotation.agreement = verdict.verdict
            hits += 1
    return hits
