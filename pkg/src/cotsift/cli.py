"""Command-line driver for the curation pipeline.

Commands: validate | annotate | judge-agreement | embed | cluster | select |
mix | report | prompt | generate. Every command reads its inputs untouched,
writes all outputs under --out, and drops a manifest (config hash, input
hashes, seed, tool version, counts) sufficient to reproduce the run.
Manifests contain no timestamps, so repeated identical invocations are
byte-identical.

A flat key=value config file supplies defaults; explicit flags win. The
endpoint API key, when needed, comes from the COTSIFT_API_KEY env var.

Exit codes: 0 ok, 2 configuration, 3 data, 4 endpoint, 5 internal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .annotator import (
    AGREE,
    DISAGREE,
    annotations_by_id,
    annotate_corpus,
    apply_verdicts,
    judge_corpus_agreement,
    load_annotations,
    save_annotations,
)
from .client import (
    HttpChatClient,
    HttpEmbeddingClient,
    JudgeConfig,
    StubChatClient,
    StubEmbeddingClient,
)
from .clustering import density_cluster, kmeans, load_assignment, save_assignment
from .corpus import load_corpus, selectable, validate_corpus
from .embedder import embed_questions, load_embeddings, save_embeddings
from .errors import (
    EXIT_INTERNAL,
    BadCommand,
    BadConfig,
    CotsiftError,
    MissingVerdict,
    UnwritablePath,
)
from .mixer import (
    DEFAULT_MAX_TARGET_UNITS,
    DEFAULT_THINK_BUDGET,
    INFERENCE_MODES,
    MIX_SCHEMES,
    MixParams,
    build_inference_prompt,
    build_mixed_dataset,
    export_dataset,
    filter_max_length,
    mean_system2_budget,
    system2_fraction,
)
from .report import DEFAULT_BUCKET_WIDTH, FORMATS, compute_stats, emit_report
from .selector import (
    COUNT_BUCKETS,
    STRATEGIES,
    VERBOSITY_BANDS,
    LengthSamplingParams,
    SelectionSpec,
    StrategyDiversityParams,
    filter_short_reference,
    select_by_agreement,
    select_by_length,
    select_by_verbosity,
    select_cluster_stratified,
    select_nn_seeded,
    select_random,
    select_strategy_count_bucket,
    select_strategy_diverse,
    select_topic_uniform,
)
from .synth import generate as synth_generate

logger = logging.getLogger(__name__)


def _sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _load_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat key = value config file (# starts a comment)."""
    values: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"{path}:{line_no}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip().strip("\"'")
    return values


def _resolve(args: argparse.Namespace, config: dict[str, str], name: str, default, cast=None):
    """Effective option value: explicit flag > config file > default."""
    value = getattr(args, name, None)
    if value is None:
        value = config.get(name, default)
        if value is not None and cast is not None:
            value = cast(value)
    return value


def _out_dir(args: argparse.Namespace, config: dict[str, str]) -> Path:
    out = _resolve(args, config, "out", None)
    if out is None:
        raise BadConfig("--out directory is required")
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritablePath(f"cannot create output directory {path}: {exc}") from None
    return path


def _write_manifest(out_dir: Path, command: str, payload: dict) -> Path:
    manifest = {"tool": "cotsift", "version": __version__, "command": command}
    manifest.update(payload)
    manifest["config_hash"] = hashlib.sha256(
        json.dumps(manifest, sort_keys=True).encode("utf-8")
    ).hexdigest()
    path = out_dir / f"{command}.manifest.json"
    path.write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n", "utf-8"
    )
    return path


def _judge_config(args, config) -> JudgeConfig:
    return JudgeConfig(
        endpoint_url=_resolve(args, config, "endpoint", "") or "",
        model_name=_resolve(args, config, "model", "") or "",
        temperature=float(_resolve(args, config, "temperature", 0.0)),
        max_retries=int(_resolve(args, config, "max_retries", 3)),
        parallelism=int(_resolve(args, config, "parallelism", 4)),
        timeout=float(_resolve(args, config, "timeout", 60.0)),
    )


def _chat_client(args, config):
    stub_dir = _resolve(args, config, "stub_dir", None)
    if stub_dir:
        return StubChatClient(stub_dir)
    judge = _judge_config(args, config)
    if not judge.endpoint_url:
        raise BadConfig("either --stub-dir or --endpoint is required")
    return HttpChatClient(judge)


def _embedding_client(args, config):
    stub_dir = _resolve(args, config, "stub_dir", None)
    if stub_dir:
        return StubEmbeddingClient.from_stub_dir(stub_dir), "stub-embedder"
    judge = _judge_config(args, config)
    if not judge.endpoint_url:
        raise BadConfig("either --stub-dir or --endpoint is required")
    return HttpEmbeddingClient(judge), judge.model_name


def _load_alt_answers(path: str | Path) -> dict[str, str]:
    answers: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                row = json.loads(line)
                answers[row["id"]] = row.get("answer") or row.get("answer_text", "")
    return answers


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_validate(args, config) -> int:
    out = _out_dir(args, config)
    corpus_path = _resolve(args, config, "corpus", None)
    if corpus_path is None:
        raise BadConfig("--corpus is required")
    _, report = validate_corpus(corpus_path, out / "rejects.jsonl")
    _write_manifest(
        out,
        "validate",
        {
            "inputs": {"corpus": _sha256_file(corpus_path)},
            "outputs": ["rejects.jsonl"],
            "counts": report.summary(),
        },
    )
    print(json.dumps(report.summary()))
    return 0


def _cmd_annotate(args, config) -> int:
    out = _out_dir(args, config)
    corpus_path = _resolve(args, config, "corpus", None)
    if corpus_path is None:
        raise BadConfig("--corpus is required")
    examples = load_corpus(corpus_path)
    client = _chat_client(args, config)
    judge = _judge_config(args, config)
    threshold = float(_resolve(args, config, "failure_threshold", 0.1))
    out_path = out / "annotations.jsonl"
    report = annotate_corpus(
        examples, client, judge, out_path, failure_threshold=threshold
    )
    _write_manifest(
        out,
        "annotate",
        {
            "inputs": {"corpus": _sha256_file(corpus_path)},
            "outputs": ["annotations.jsonl"],
            "params": {"failure_threshold": threshold, "parallelism": judge.parallelism},
            "counts": report.to_dict(),
        },
    )
    print(json.dumps(report.to_dict()))
    return 0


def _cmd_judge_agreement(args, config) -> int:
    out = _out_dir(args, config)
    corpus_path = _resolve(args, config, "corpus", None)
    alt_path = _resolve(args, config, "alt_answers", None)
    if corpus_path is None or alt_path is None:
        raise BadConfig("--corpus and --alt-answers are required")
    examples = load_corpus(corpus_path)
    alt_answers = _load_alt_answers(alt_path)
    client = _chat_client(args, config)
    judge = _judge_config(args, config)
    threshold = float(_resolve(args, config, "failure_threshold", 0.1))
    verdicts, report = judge_corpus_agreement(
        examples, alt_answers, client, judge, failure_threshold=threshold
    )
    verdict_path = out / "verdicts.jsonl"
    with open(verdict_path, "w", encoding="utf-8") as handle:
        for verdict in verdicts:
            handle.write(json.dumps(verdict.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")

    outputs = ["verdicts.jsonl"]
    inputs = {"corpus": _sha256_file(corpus_path), "alt_answers": _sha256_file(alt_path)}
    annotations_path = _resolve(args, config, "annotations", None)
    if annotations_path:
        annotations = load_annotations(annotations_path)
        apply_verdicts(annotations, verdicts)
        save_annotations(out / "annotations.jsonl", annotations)
        outputs.append("annotations.jsonl")
        inputs["annotations"] = _sha256_file(annotations_path)

    _write_manifest(
        out,
        "judge-agreement",
        {"inputs": inputs, "outputs": outputs, "counts": report.to_dict()},
    )
    print(json.dumps(report.to_dict()))
    return 0


def _cmd_embed(args, config) -> int:
    out = _out_dir(args, config)
    corpus_path = _resolve(args, config, "corpus", None)
    if corpus_path is None:
        raise BadConfig("--corpus is required")
    examples = load_corpus(corpus_path)
    client, model_name = _embedding_client(args, config)
    batch_size = int(_resolve(args, config, "batch_size", 64))
    threshold = float(_resolve(args, config, "failure_threshold", 0.1))
    expected_dim = _resolve(args, config, "dim", None, cast=int)
    base = out / "embeddings"
    embeddings = embed_questions(
        examples,
        client,
        model_name=model_name,
        batch_size=batch_size,
        expected_dim=int(expected_dim) if expected_dim is not None else None,
        partial_base=base,
        failure_threshold=threshold,
    )
    save_embeddings(embeddings, base)
    _write_manifest(
        out,
        "embed",
        {
            "inputs": {"corpus": _sha256_file(corpus_path)},
            "outputs": ["embeddings.f32", "embeddings.json"],
            "params": {"batch_size": batch_size, "model_name": model_name},
            "counts": {"embedded": len(embeddings), "dim": embeddings.dim},
        },
    )
    print(json.dumps({"embedded": len(embeddings), "dim": embeddings.dim}))
    return 0


def _cmd_cluster(args, config) -> int:
    out = _out_dir(args, config)
    embeddings_base = _resolve(args, config, "embeddings", None)
    if embeddings_base is None:
        raise BadConfig("--embeddings is required")
    embeddings = load_embeddings(embeddings_base)
    method = _resolve(args, config, "method", "density")
    seed = int(_resolve(args, config, "seed", 0))
    if method == "kmeans":
        k = _resolve(args, config, "k", None, cast=int)
        if k is None:
            raise BadConfig("--k is required for kmeans")
        max_iters = int(_resolve(args, config, "max_iters", 100))
        assignment = kmeans(embeddings, int(k), seed, max_iters)
    elif method == "density":
        min_cluster_size = int(_resolve(args, config, "min_cluster_size", 15))
        min_samples = _resolve(args, config, "min_samples", None, cast=int)
        assignment = density_cluster(
            embeddings,
            min_cluster_size,
            int(min_samples) if min_samples is not None else None,
        )
    else:
        raise BadConfig(f"unknown clustering method {method!r}")
    save_assignment(assignment, out / "clusters.jsonl")
    counts = {
        "n_clusters": assignment.n_clusters,
        "noise": assignment.noise_count(),
        "records": len(assignment.labels),
    }
    _write_manifest(
        out,
        "cluster",
        {
            "inputs": {"embeddings": _sha256_file(Path(embeddings_base).with_suffix(".f32"))},
            "outputs": ["clusters.jsonl"],
            "params": {"method": method, "seed": seed, **assignment.params},
            "counts": counts,
        },
    )
    print(json.dumps(counts))
    return 0


def _select_ids(args, config, spec: SelectionSpec) -> tuple[list[str], dict]:
    """Dispatch one selection strategy; returns (ids, per-stratum counts)."""
    strategy = spec.strategy
    corpus_path = _resolve(args, config, "corpus", None)
    annotations_path = _resolve(args, config, "annotations", None)

    def need(value, flag: str):
        if value is None:
            raise BadConfig(f"{flag} is required for strategy {strategy!r}")
        return value

    if strategy == "random":
        examples = selectable(load_corpus(need(corpus_path, "--corpus")))
        return select_random([ex.id for ex in examples], spec.n, spec.seed), {}

    if strategy == "short_reference":
        examples = selectable(load_corpus(need(corpus_path, "--corpus")))
        max_words = int(spec.params.get("max_words", 9))
        passing = filter_short_reference(examples, max_words)
        return select_random(passing, spec.n, spec.seed), {}

    if strategy == "cluster_stratified":
        clusters_path = need(_resolve(args, config, "clusters", None), "--clusters")
        assignment = load_assignment(clusters_path)
        ids = select_cluster_stratified(assignment, spec.n, spec.seed)
        strata = {
            str(label): sum(1 for i in ids if assignment.labels[i] == label)
            for label in sorted(set(assignment.labels.values()))
        }
        return ids, strata

    if strategy == "nn_seeded":
        embeddings_base = need(_resolve(args, config, "embeddings", None), "--embeddings")
        embeddings = load_embeddings(embeddings_base)
        seeds_path = need(_resolve(args, config, "seed_questions", None), "--seed-questions")
        questions = [
            line for line in Path(seeds_path).read_text("utf-8").splitlines() if line.strip()
        ]
        client, _ = _embedding_client(args, config)
        vectors = client.embed(questions)
        seeds = {f"seed{i:04d}": np.asarray(vec) for i, vec in enumerate(vectors)}
        return select_nn_seeded(embeddings, seeds, spec.n), {}

    annotations = load_annotations(need(annotations_path, "--annotations"))
    if strategy == "topic_uniform":
        ids = select_topic_uniform(annotations, spec.n, spec.seed)
        by_id = annotations_by_id(annotations)
        strata: dict[str, int] = {}
        for example_id in ids:
            strata[by_id[example_id].discipline] = strata.get(by_id[example_id].discipline, 0) + 1
        return ids, strata
    if strategy == "strategy_diverse":
        params = StrategyDiversityParams(
            r_min=int(spec.params.get("r_min", 4)),
            r_max=int(spec.params.get("r_max", 8)),
            downweight=float(spec.params.get("downweight", 0.25)),
            density_downweight=float(spec.params.get("density_downweight", 0.5)),
        )
        return select_strategy_diverse(annotations, spec.n, params, spec.seed), {}
    if strategy == "length_weighted":
        params = LengthSamplingParams(
            c_norm=float(spec.params.get("c_norm", 5000.0)),
            tau=float(spec.params.get("tau", 2.5)),
        )
        return select_by_length(annotations, spec.n, params, spec.seed), {}
    if strategy == "verbosity_band":
        band = spec.params.get("band", "med")
        return select_by_verbosity(annotations, spec.n, band, spec.seed), {}
    if strategy == "agreement":
        want = spec.params.get("want", DISAGREE)
        return select_by_agreement(annotations, spec.n, want, spec.seed), {}
    if strategy == "strategy_count_bucket":
        bucket = spec.params.get("bucket", "med")
        return select_strategy_count_bucket(annotations, spec.n, bucket, spec.seed), {}
    raise BadCommand(f"unhandled strategy {strategy!r}")


def _cmd_select(args, config) -> int:
    out = _out_dir(args, config)
    strategy = _resolve(args, config, "strategy", None)
    n = _resolve(args, config, "n", None, cast=int)
    if strategy is None or n is None:
        raise BadConfig("--strategy and --n are required")
    seed = int(_resolve(args, config, "seed", 0))
    params = {}
    for key in (
        "c_norm",
        "tau",
        "r_min",
        "r_max",
        "downweight",
        "density_downweight",
        "band",
        "want",
        "bucket",
        "max_words",
    ):
        value = _resolve(args, config, key, None)
        if value is not None:
            params[key] = value
    spec = SelectionSpec(strategy=strategy, n=int(n), seed=seed, params=params)
    ids, strata = _select_ids(args, config, spec)

    ids_path = out / "selected_ids.txt"
    ids_path.write_text("\n".join(ids) + "\n", "utf-8")
    inputs = {}
    for name in ("corpus", "annotations", "clusters"):
        path = _resolve(args, config, name, None)
        if path:
            inputs[name] = _sha256_file(path)
    _write_manifest(
        out,
        "select",
        {
            "inputs": inputs,
            "outputs": ["selected_ids.txt"],
            "spec": spec.to_dict(),
            "counts": {"selected": len(ids), "per_stratum": strata},
        },
    )
    print(json.dumps({"selected": len(ids)}))
    return 0


def _cmd_mix(args, config) -> int:
    out = _out_dir(args, config)
    corpus_path = _resolve(args, config, "corpus", None)
    scheme = _resolve(args, config, "scheme", None)
    if corpus_path is None or scheme is None:
        raise BadConfig("--corpus and --scheme are required")
    params = MixParams(
        scheme=scheme,
        p_system2=float(_resolve(args, config, "p_system2", 0.0)),
        seed=int(_resolve(args, config, "seed", 0)),
        granularity=int(_resolve(args, config, "granularity", 100)),
    )
    examples = selectable(load_corpus(corpus_path))
    ids_path = _resolve(args, config, "ids", None)
    if ids_path:
        wanted = set(Path(ids_path).read_text("utf-8").split())
        examples = [ex for ex in examples if ex.id in wanted]

    annotations = None
    annotations_path = _resolve(args, config, "annotations", None)
    if annotations_path:
        annotations = load_annotations(annotations_path)
    if scheme == "difficulty" and annotations is None:
        raise MissingVerdict("difficulty mixing requires --annotations with verdicts")

    dataset = build_mixed_dataset(examples, params, annotations)
    max_units = int(_resolve(args, config, "max_target_units", DEFAULT_MAX_TARGET_UNITS))
    dataset, dropped = filter_max_length(dataset, max_units)
    export_dataset(out / "dataset.jsonl", dataset)

    inputs = {"corpus": _sha256_file(corpus_path)}
    if annotations_path:
        inputs["annotations"] = _sha256_file(annotations_path)
    manifest_counts = {
        "scheme": scheme,
        "p_system2": params.p_system2,
        "realized_s2_fraction": system2_fraction(dataset),
        "mean_K_s2": mean_system2_budget(dataset),
        "drop_count": dropped,
        "records": len(dataset),
        "seed": params.seed,
    }
    _write_manifest(
        out,
        "mix",
        {
            "inputs": inputs,
            "outputs": ["dataset.jsonl"],
            "params": {"granularity": params.granularity, "max_target_units": max_units},
            "counts": manifest_counts,
        },
    )
    print(json.dumps(manifest_counts))
    return 0


def _cmd_report(args, config) -> int:
    out = _out_dir(args, config)
    annotations_path = _resolve(args, config, "annotations", None)
    if annotations_path is None:
        raise BadConfig("--annotations is required")
    annotations = load_annotations(annotations_path)
    bucket_width = int(_resolve(args, config, "bucket_width", DEFAULT_BUCKET_WIDTH))
    formats = _resolve(args, config, "formats", ",".join(FORMATS))
    format_list = [f.strip() for f in formats.split(",") if f.strip()]
    stats = compute_stats(annotations, bucket_width)
    written = emit_report(stats, out, format_list)
    _write_manifest(
        out,
        "report",
        {
            "inputs": {"annotations": _sha256_file(annotations_path)},
            "outputs": sorted(p.name for p in written),
            "params": {"bucket_width": bucket_width, "formats": format_list},
            "counts": {"n_records": stats.n_records},
        },
    )
    print(json.dumps({"n_records": stats.n_records, "files": len(written)}))
    return 0


def _cmd_prompt(args, config) -> int:
    out = _out_dir(args, config)
    corpus_path = _resolve(args, config, "corpus", None)
    mode = _resolve(args, config, "mode", None)
    if corpus_path is None or mode is None:
        raise BadConfig("--corpus and --mode are required")
    modes = list(INFERENCE_MODES) if mode == "all" else [mode]
    k = int(_resolve(args, config, "k", DEFAULT_THINK_BUDGET))
    examples = load_corpus(corpus_path)
    path = out / "prompts.jsonl"
    with open(path, "w", encoding="utf-8") as handle:
        for example in sorted(examples, key=lambda ex: ex.id):
            for m in modes:
                row = {
                    "id": example.id,
                    "mode": m,
                    "prompt": build_inference_prompt(example.question, m, k),
                }
                handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    _write_manifest(
        out,
        "prompt",
        {
            "inputs": {"corpus": _sha256_file(corpus_path)},
            "outputs": ["prompts.jsonl"],
            "params": {"modes": modes, "k": k},
            "counts": {"prompts": len(examples) * len(modes)},
        },
    )
    print(json.dumps({"prompts": len(examples) * len(modes)}))
    return 0


def _cmd_generate(args, config) -> int:
    out = _out_dir(args, config)
    n = int(_resolve(args, config, "n", 1000))
    seed = int(_resolve(args, config, "seed", 0))
    disagree = float(_resolve(args, config, "disagree_fraction", 0.36))
    dim = int(_resolve(args, config, "dim", 64))
    summary = synth_generate(out, n, seed, disagree_fraction=disagree, embedding_dim=dim)
    _write_manifest(
        out,
        "generate",
        {
            "outputs": ["corpus.jsonl", "alt_answers.jsonl", "stubs"],
            "params": {"n": n, "seed": seed, "disagree_fraction": disagree, "dim": dim},
        },
    )
    print(json.dumps(summary))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_endpoint_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--endpoint", help="chat/embedding endpoint URL")
    parser.add_argument("--model", help="endpoint model name")
    parser.add_argument("--stub-dir", dest="stub_dir", help="directory of canned responses")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--max-retries", dest="max_retries", type=int)
    parser.add_argument("--parallelism", type=int)
    parser.add_argument("--timeout", type=float)
    parser.add_argument("--failure-threshold", dest="failure_threshold", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cotsift",
        description="Curate reasoning-distillation corpora: annotate, select, mix, export.",
    )
    parser.add_argument("--version", action="version", version=f"cotsift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key = value config file; flags win")
        p.add_argument("--out", help="output directory (all artifacts land here)")
        p.add_argument("--log-level", dest="log_level", default=None)

    p = sub.add_parser("validate", help="validate a corpus, quarantining bad records")
    common(p)
    p.add_argument("--corpus")

    p = sub.add_parser("annotate", help="annotate strategies, verbosity, and domains")
    common(p)
    p.add_argument("--corpus")
    _add_endpoint_flags(p)

    p = sub.add_parser("judge-agreement", help="judge teacher vs alternate answers")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--alt-answers", dest="alt_answers")
    p.add_argument("--annotations", help="annotations to update with verdicts")
    _add_endpoint_flags(p)

    p = sub.add_parser("embed", help="embed questions via an endpoint or stub")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--dim", type=int, help="expected embedding dimension")
    _add_endpoint_flags(p)

    p = sub.add_parser("cluster", help="cluster embeddings (kmeans or density)")
    common(p)
    p.add_argument("--embeddings", help="embeddings base path (no extension)")
    p.add_argument("--method", choices=["kmeans", "density"])
    p.add_argument("--k", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--min-cluster-size", dest="min_cluster_size", type=int)
    p.add_argument("--min-samples", dest="min_samples", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("select", help="select a training subset by one strategy")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--annotations")
    p.add_argument("--clusters")
    p.add_argument("--embeddings")
    p.add_argument("--seed-questions", dest="seed_questions")
    p.add_argument("--strategy", choices=list(STRATEGIES))
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--c-norm", dest="c_norm", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--r-min", dest="r_min", type=int)
    p.add_argument("--r-max", dest="r_max", type=int)
    p.add_argument("--downweight", type=float)
    p.add_argument("--density-downweight", dest="density_downweight", type=float)
    p.add_argument("--band", choices=list(VERBOSITY_BANDS))
    p.add_argument("--want", choices=[AGREE, DISAGREE])
    p.add_argument("--bucket", choices=list(COUNT_BUCKETS))
    p.add_argument("--max-words", dest="max_words", type=int)
    _add_endpoint_flags(p)

    p = sub.add_parser("mix", help="build a mixed System-1/System-2 SFT dataset")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--annotations")
    p.add_argument("--ids", help="optional id list restricting the corpus")
    p.add_argument("--scheme", choices=list(MIX_SCHEMES))
    p.add_argument("--p-system2", dest="p_system2", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--granularity", type=int)
    p.add_argument("--max-target-units", dest="max_target_units", type=int)

    p = sub.add_parser("report", help="emit corpus statistics (csv/json/svg)")
    common(p)
    p.add_argument("--annotations")
    p.add_argument("--bucket-width", dest="bucket_width", type=int)
    p.add_argument("--formats", help="comma-separated subset of csv,json,svg")

    p = sub.add_parser("prompt", help="emit inference prompts for a corpus")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--mode", choices=list(INFERENCE_MODES) + ["all"])
    p.add_argument("--k", type=int)

    p = sub.add_parser("generate", help="generate a synthetic corpus plus stubs")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--disagree-fraction", dest="disagree_fraction", type=float)
    p.add_argument("--dim", type=int)

    return parser


_COMMANDS = {
    "validate": _cmd_validate,
    "annotate": _cmd_annotate,
    "judge-agreement": _cmd_judge_agreement,
    "embed": _cmd_embed,
    "cluster": _cmd_cluster,
    "select": _cmd_select,
    "mix": _cmd_mix,
    "report": _cmd_report,
    "prompt": _cmd_prompt,
    "generate": _cmd_generate,
}


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config: dict[str, str] = {}
    if getattr(args, "config", None):
        config = _load_config_file(args.config)
    level = _resolve(args, config, "log_level", "WARNING")
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING))
    handler = _COMMANDS.get(args.command)
    if handler is None:
        raise BadCommand(f"unknown command {args.command!r}")
    return handler(args, config)


def main(argv: list[str] | None = None) -> int:
    try:
        return run_command(argv)
    except CotsiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BadConfig.exit_code
    except Exception as exc:  # pragma: no cover - safety net
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
