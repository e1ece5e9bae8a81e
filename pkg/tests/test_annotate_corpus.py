"""The corpus annotation loop: parallelism, resume, failure threshold."""

from __future__ import annotations

import pytest

from conftest import FakeChatClient, domain_response, make_example, strategy_response
from cotsift.annotator import (
    annotate_corpus,
    judge_corpus_agreement,
    load_annotations,
)
from cotsift.client import JudgeConfig
from cotsift.errors import FailureThresholdExceeded
from cotsift.taxonomy import UNLABELED


def _corpus(n: int):
    return [make_example(example_id=f"r{i:03d}", think=f"trace {i}", answer=f"ans {i}") for i in range(n)]


def _scripted_client(examples, fail_ids=()):
    responses = {}
    for example in examples:
        responses[("annotate_reasoning", example.id)] = strategy_response()
        responses[("annotate_domain", example.id)] = domain_response()
    client = FakeChatClient(responses=responses)
    client.fail_keys = set(fail_ids)
    return client


def test_three_record_run_report(tmp_path):
    examples = _corpus(3)
    client = _scripted_client(examples)
    out = tmp_path / "annotations.jsonl"
    report = annotate_corpus(examples, client, JudgeConfig(parallelism=2), out)
    assert report.to_dict() == {"total": 3, "ok": 3, "failed": 0, "resumed": 0}
    annotations = load_annotations(out)
    assert [a.example_id for a in annotations] == ["r000", "r001", "r002"]
    assert annotations[0].strategies == ["analysis", "calculation", "exploration", "self-verification"]
    assert annotations[0].step_count == 3
    assert annotations[0].discipline == "Science"
    assert annotations[0].think_token_len == 2
    assert annotations[0].agreement == "unknown"


def test_output_independent_of_parallelism(tmp_path):
    examples = _corpus(20)
    out_serial = tmp_path / "serial.jsonl"
    out_parallel = tmp_path / "parallel.jsonl"
    annotate_corpus(examples, _scripted_client(examples), JudgeConfig(parallelism=1), out_serial)
    annotate_corpus(examples, _scripted_client(examples), JudgeConfig(parallelism=8), out_parallel)
    assert out_serial.read_bytes() == out_parallel.read_bytes()


def test_kill_and_resume_matches_uninterrupted(tmp_path):
    examples = _corpus(12)

    reference = tmp_path / "reference.jsonl"
    annotate_corpus(examples, _scripted_client(examples), JudgeConfig(parallelism=1), reference)

    resumed = tmp_path / "resumed.jsonl"
    dying = _scripted_client(examples)
    dying.fail_after = 9  # hard interrupt mid-run, not an endpoint error
    with pytest.raises(RuntimeError):
        annotate_corpus(examples, dying, JudgeConfig(parallelism=1), resumed)
    assert resumed.with_suffix(".jsonl.partial").exists()
    assert not resumed.exists()

    report = annotate_corpus(examples, _scripted_client(examples), JudgeConfig(parallelism=1), resumed)
    assert report.resumed > 0
    assert not resumed.with_suffix(".jsonl.partial").exists()
    assert resumed.read_bytes() == reference.read_bytes()


def test_failures_marked_unlabeled_and_counted(tmp_path):
    examples = _corpus(10)
    client = _scripted_client(examples, fail_ids={"r004"})
    out = tmp_path / "annotations.jsonl"
    report = annotate_corpus(
        examples, client, JudgeConfig(parallelism=2), out, failure_threshold=0.5
    )
    assert report.failed == 1
    assert report.ok == 9
    failed = [a for a in load_annotations(out) if a.example_id == "r004"][0]
    assert failed.discipline == UNLABELED
    assert failed.strategies == []
    assert failed.verbosity == 0
    # token lengths are computed locally, so they survive endpoint failures
    assert failed.think_token_len == 2


def test_threshold_abort(tmp_path):
    examples = _corpus(20)
    fail_ids = {f"r{i:03d}" for i in range(0, 20, 2)}  # 50% failure
    client = _scripted_client(examples, fail_ids=fail_ids)
    with pytest.raises(FailureThresholdExceeded):
        annotate_corpus(
            examples,
            client,
            JudgeConfig(parallelism=2),
            tmp_path / "annotations.jsonl",
            failure_threshold=0.1,
        )


def test_judge_corpus_agreement_and_threshold(tmp_path):
    examples = _corpus(10)
    responses = {}
    for i, example in enumerate(examples):
        verdict = "DISAGREE" if i < 4 else "AGREE"
        responses[("judge", example.id)] = f"{verdict}\nbecause"
    client = FakeChatClient(responses=responses)
    alt = {example.id: f"alt answer {i}" for i, example in enumerate(examples)}

    verdicts, report = judge_corpus_agreement(examples, alt, client, JudgeConfig(parallelism=3))
    assert report.ok == 10
    assert sum(1 for v in verdicts if v.verdict == "disagree") == 4
    assert [v.example_id for v in verdicts] == sorted(alt)

    # missing alternate answers count toward the failure threshold
    sparse_alt = {example.id: alt[example.id] for example in examples[:5]}
    with pytest.raises(FailureThresholdExceeded):
        judge_corpus_agreement(
            examples, sparse_alt, client, JudgeConfig(parallelism=1), failure_threshold=0.2
        )
