"""Question embeddings: batched ingestion, binary persistence, exact k-NN.

Vectors are L2-normalized on ingest so cosine similarity reduces to a dot
product and Euclidean clustering operates on the unit sphere. On disk an
embedding set is a little-endian float32 row matrix (``<base>.f32``) plus a
JSON index (``<base>.json``) mapping example id to row.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .client import EmbeddingClient
from .corpus import ReasoningExample
from .errors import DimMismatch, EmbeddingUnavailable, FailureThresholdExceeded

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingSet:
    """Dense vectors keyed by example id; rows are stored sorted by id."""

    ids: list[str]
    matrix: np.ndarray  # (n, dim) float32, unit rows
    model_name: str = ""

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or len(self.ids) != self.matrix.shape[0]:
            raise DimMismatch("index/matrix shape mismatch")
        if not np.all(np.isfinite(self.matrix)):
            raise DimMismatch("embedding matrix contains non-finite values")
        self._row_of = {example_id: row for row, example_id in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def vector(self, example_id: str) -> np.ndarray:
        return self.matrix[self._row_of[example_id]]

    @property
    def rows(self) -> dict[str, np.ndarray]:
        return {example_id: self.matrix[row] for example_id, row in self._row_of.items()}


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return (matrix / norms).astype(np.float32)


def save_embeddings(embeddings: EmbeddingSet, base_path: str | Path) -> tuple[Path, Path]:
    base = Path(base_path)
    bin_path = base.with_suffix(".f32")
    index_path = base.with_suffix(".json")
    embeddings.matrix.astype("<f4").tofile(bin_path)
    index = {
        "dim": embeddings.dim,
        "model_name": embeddings.model_name,
        "rows": {example_id: row for row, example_id in enumerate(embeddings.ids)},
    }
    index_path.write_text(
        json.dumps(index, ensure_ascii=False, sort_keys=True, indent=2) + "\n", "utf-8"
    )
    return bin_path, index_path


def load_embeddings(base_path: str | Path) -> EmbeddingSet:
    base = Path(base_path)
    index = json.loads(base.with_suffix(".json").read_text("utf-8"))
    dim = int(index["dim"])
    raw = np.fromfile(base.with_suffix(".f32"), dtype="<f4")
    matrix = raw.reshape(-1, dim)
    ids = [example_id for example_id, _ in sorted(index["rows"].items(), key=lambda kv: kv[1])]
    return EmbeddingSet(ids=ids, matrix=matrix, model_name=index.get("model_name", ""))


def embed_questions(
    examples: Sequence[ReasoningExample],
    client: EmbeddingClient,
    *,
    model_name: str = "",
    batch_size: int = 64,
    expected_dim: int | None = None,
    partial_base: str | Path | None = None,
    failure_threshold: float = 0.1,
) -> EmbeddingSet:
    """Embed every question, one unit vector per record, sorted by id.

    Requests go out in batches; a batch that fails after the client's own
    retries marks all its records failed and the run aborts once failures
    provably exceed `failure_threshold`. With `partial_base` set, finished
    rows stream to ``<base>.partial.f32`` / ``.partial.ids`` and an
    interrupted run resumes from the consistent prefix.
    """
    ordered = sorted(examples, key=lambda ex: ex.id)
    total = len(ordered)
    dim = expected_dim

    partial_bin = partial_ids = None
    done_rows: list[np.ndarray] = []
    done_ids: list[str] = []
    if partial_base is not None:
        base = Path(partial_base)
        partial_bin = base.with_suffix(".partial.f32")
        partial_ids = base.with_suffix(".partial.ids")
        if partial_bin.exists() and partial_ids.exists() and dim is None:
            logger.warning("cannot resume without expected_dim; starting over")
            partial_bin.unlink()
            partial_ids.unlink()
        if partial_bin.exists() and partial_ids.exists() and dim is not None:
            ids_on_disk = partial_ids.read_text("utf-8").splitlines()
            raw = np.fromfile(partial_bin, dtype="<f4")
            complete = min(len(ids_on_disk), raw.size // dim)
            expected_prefix = [ex.id for ex in ordered[:complete]]
            if ids_on_disk[:complete] == expected_prefix:
                done_ids = ids_on_disk[:complete]
                done_rows = list(raw[: complete * dim].reshape(complete, dim))
            else:
                logger.warning("partial embedding files do not match corpus; starting over")

    failed = 0
    max_failures = failure_threshold * total
    pending = ordered[len(done_ids) :]

    bin_handle = open(partial_bin, "ab" if done_ids else "wb") if partial_bin else None
    ids_handle = open(partial_ids, "a" if done_ids else "w", encoding="utf-8") if partial_ids else None
    try:
        for start in range(0, len(pending), batch_size):
            batch = pending[start : start + batch_size]
            try:
                vectors = client.embed([ex.question for ex in batch])
            except EmbeddingUnavailable as exc:
                failed += len(batch)
                logger.warning("embedding batch failed (%d records): %s", len(batch), exc)
                if failed > max_failures:
                    raise FailureThresholdExceeded(
                        f"{failed}/{total} embeddings failed; threshold is "
                        f"{failure_threshold:.0%}"
                    ) from None
                continue
            block = np.asarray(vectors, dtype=np.float32)
            if block.ndim != 2 or block.shape[0] != len(batch):
                raise DimMismatch("endpoint returned a malformed embedding batch")
            if dim is None:
                dim = int(block.shape[1])
            if block.shape[1] != dim:
                raise DimMismatch(f"endpoint returned dim {block.shape[1]}, expected {dim}")
            block = normalize_rows(block)
            for example, row in zip(batch, block):
                done_ids.append(example.id)
                done_rows.append(row)
                if bin_handle is not None:
                    row.astype("<f4").tofile(bin_handle)
                    ids_handle.write(example.id + "\n")
            if bin_handle is not None:
                bin_handle.flush()
                ids_handle.flush()
    finally:
        if bin_handle is not None:
            bin_handle.close()
            ids_handle.close()

    if not done_rows:
        raise EmbeddingUnavailable("no records were embedded")
    matrix = np.vstack(done_rows)
    if partial_bin is not None:
        partial_bin.unlink()
        partial_ids.unlink()
    return EmbeddingSet(ids=done_ids, matrix=matrix, model_name=model_name)


def nearest_neighbors(
    seeds: Mapping[str, np.ndarray] | EmbeddingSet,
    embeddings: EmbeddingSet,
    k: int,
    *,
    union: bool = False,
) -> dict[str, list[str]] | list[str]:
    """Exact top-k by cosine similarity for each seed vector.

    Ties break by ascending example id. With ``union=True`` the per-seed
    lists collapse into one deduplicated, sorted id list (the construction
    used to grow a subset around seed questions).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(seeds, EmbeddingSet):
        seed_items = [(example_id, seeds.vector(example_id)) for example_id in seeds.ids]
    else:
        seed_items = sorted(seeds.items())
    if not seed_items:
        return [] if union else {}

    seed_matrix = normalize_rows(np.asarray([vec for _, vec in seed_items], dtype=np.float32))
    if seed_matrix.shape[1] != embeddings.dim:
        raise DimMismatch(
            f"seed dim {seed_matrix.shape[1]} != embedding dim {embeddings.dim}"
        )

    k_eff = min(k, len(embeddings))
    # float64 similarities: keeps rankings exactly reproducible
    sims = seed_matrix.astype(np.float64) @ embeddings.matrix.astype(np.float64).T
    # embeddings.ids is sorted, so row index order == id order for tie-breaks
    results: dict[str, list[str]] = {}
    row_rank = np.arange(len(embeddings))
    for (seed_id, _), sim_row in zip(seed_items, sims):
        order = np.lexsort((row_rank, -sim_row))[:k_eff]
        results[seed_id] = [embeddings.ids[row] for row in order]
    if union:
        merged = sorted({example_id for ids in results.values() for example_id in ids})
        return merged
    return results
