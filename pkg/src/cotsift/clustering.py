"""Clustering over question embeddings: k-means and density-based (HDBSCAN family).

Both methods are deterministic functions of (inputs, seed, params) and label
records by example id. K-means runs Lloyd iterations with k-means++ seeding
and asserts its inertia is non-increasing every step. The density method
follows the classic HDBSCAN pipeline: core distances, mutual-reachability
minimum spanning tree, condensed cluster tree with a minimum cluster size,
and stability-based (excess-of-mass) flat extraction. Points belonging to no
stable cluster are noise, labeled -1.

Everything runs on dense matrices with O(n^2) distance work, which is the
right trade at corpus-curation scale (tens of thousands of rows) and keeps
results exactly reproducible.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .embedder import EmbeddingSet
from .errors import KTooLarge

logger = logging.getLogger(__name__)

NOISE = -1

KMEANS = "kmeans"
DENSITY = "density"


@dataclass
class ClusterAssignment:
    """Flat cluster labels keyed by example id; -1 marks noise."""

    labels: dict[str, int]
    n_clusters: int
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        observed = {label for label in self.labels.values() if label != NOISE}
        expected = set(range(self.n_clusters))
        if observed != expected and observed:
            raise ValueError("non-noise labels must form a contiguous range")

    def strata(self) -> dict[int, list[str]]:
        groups: dict[int, list[str]] = {}
        for example_id in sorted(self.labels):
            groups.setdefault(self.labels[example_id], []).append(example_id)
        return groups

    def noise_count(self) -> int:
        return sum(1 for label in self.labels.values() if label == NOISE)


def save_assignment(assignment: ClusterAssignment, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for example_id in sorted(assignment.labels):
            row = {"id": example_id, "label": assignment.labels[example_id]}
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def load_assignment(path: str | Path, method: str = "", params: dict | None = None) -> ClusterAssignment:
    labels: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                row = json.loads(line)
                labels[row["id"]] = int(row["label"])
    n_clusters = len({label for label in labels.values() if label != NOISE})
    return ClusterAssignment(labels=labels, n_clusters=n_clusters, method=method, params=params or {})


def _relabel_contiguous(ids: list[str], raw_labels: np.ndarray) -> tuple[dict[str, int], int]:
    """Relabel clusters to [0, n) in order of first appearance over sorted ids."""
    mapping: dict[int, int] = {}
    labels: dict[str, int] = {}
    for example_id, raw in zip(ids, raw_labels):
        raw = int(raw)
        if raw == NOISE:
            labels[example_id] = NOISE
            continue
        if raw not in mapping:
            mapping[raw] = len(mapping)
        labels[example_id] = mapping[raw]
    return labels, len(mapping)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


def _sq_dists_to(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n, k)."""
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(centers * centers, axis=1)[None, :]
        - 2.0 * (X @ centers.T)
    )
    return np.maximum(sq, 0.0)


def _kmeans_pp_seed(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=X.dtype)
    chosen: set[int] = set()
    first = int(rng.integers(n))
    centers[0] = X[first]
    chosen.add(first)
    closest = _sq_dists_to(X, centers[:1])[:, 0]
    for i in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            # remaining mass sits on duplicates of chosen centers; fall back
            # to the first unchosen index to keep seeding deterministic
            idx = next(j for j in range(n) if j not in chosen)
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[i] = X[idx]
        chosen.add(idx)
        closest = np.minimum(closest, _sq_dists_to(X, centers[i : i + 1])[:, 0])
    return centers


def kmeans_matrix(
    X: np.ndarray, k: int, seed: int, max_iters: int = 100, tol: float = 1e-6
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations with k-means++ seeding; returns (labels, centers, inertia_history).

    The inertia history is checked non-increasing at every step.
    """
    n = X.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} rows")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(X, dtype=np.float64)
    centers = _kmeans_pp_seed(X, k, rng)

    inertia_history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        sq = _sq_dists_to(X, centers)
        labels = np.argmin(sq, axis=1)
        inertia = float(sq[np.arange(n), labels].sum())
        if inertia_history:
            assert inertia <= inertia_history[-1] * (1 + 1e-9) + 1e-12, "inertia increased"
        inertia_history.append(inertia)

        new_centers = centers.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new_centers[c] = X[members].mean(axis=0)
            else:
                # re-seed an empty cluster on the point farthest from its center
                farthest = int(np.argmax(sq[np.arange(n), labels]))
                new_centers[c] = X[farthest]
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift <= tol:
            break
    return labels, centers, inertia_history


def kmeans(
    embeddings: EmbeddingSet, k: int, seed: int, max_iters: int = 100
) -> ClusterAssignment:
    raw_labels, _, inertia_history = kmeans_matrix(embeddings.matrix, k, seed, max_iters)
    labels, n_clusters = _relabel_contiguous(embeddings.ids, raw_labels)
    return ClusterAssignment(
        labels=labels,
        n_clusters=n_clusters,
        method=KMEANS,
        params={"k": k, "seed": seed, "max_iters": max_iters, "final_inertia": inertia_history[-1]},
    )


# ---------------------------------------------------------------------------
# density-based clustering (HDBSCAN family)
# ---------------------------------------------------------------------------


def _core_distances(X: np.ndarray, sq_norms: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Distance to the k-th nearest other point (self excluded)."""
    n = X.shape[0]
    core = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        sq = sq_norms[rows, None] + sq_norms[None, :] - 2.0 * (X[rows] @ X.T)
        dists = np.sqrt(np.maximum(sq, 0.0))
        # each row includes the self distance 0, so index k is the k-th neighbor
        core[rows] = np.partition(dists, k, axis=1)[:, k]
    return core


def _mutual_reachability_mst(
    X: np.ndarray, sq_norms: np.ndarray, core: np.ndarray
) -> list[tuple[float, int, int]]:
    """Prim's MST over the implicit mutual-reachability graph; O(n^2) time, O(n) memory."""
    n = X.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_src = np.zeros(n, dtype=np.int64)
    current = 0
    in_tree[current] = True
    edges: list[tuple[float, int, int]] = []
    for _ in range(n - 1):
        sq = sq_norms + sq_norms[current] - 2.0 * (X @ X[current])
        dists = np.sqrt(np.maximum(sq, 0.0))
        reach = np.maximum(np.maximum(dists, core), core[current])
        update = reach < best
        best[update] = reach[update]
        best_src[update] = current
        best[in_tree] = np.inf
        nxt = int(np.argmin(best))
        edges.append((float(best[nxt]), int(best_src[nxt]), nxt))
        in_tree[nxt] = True
        best[nxt] = np.inf
        current = nxt
    return edges


class _UnionFind:
    """Union-find that allocates one new node per merge, dendrogram style."""

    def __init__(self, n: int):
        self.parent = list(range(2 * n - 1))
        self.size = [1] * n + [0] * (n - 1)
        self.next_label = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        label = self.next_label
        self.parent[a] = label
        self.parent[b] = label
        self.size[label] = self.size[a] + self.size[b]
        self.next_label += 1
        return label


def _single_linkage(edges: list[tuple[float, int, int]], n: int) -> list[tuple[int, int, float, int]]:
    """Merge MST edges in weight order into (left, right, distance, size) rows."""
    ordered = sorted(edges, key=lambda e: (e[0], e[1], e[2]))
    uf = _UnionFind(n)
    merges: list[tuple[int, int, float, int]] = []
    for weight, a, b in ordered:
        ra, rb = uf.find(a), uf.find(b)
        size = uf.size[ra] + uf.size[rb]
        uf.union(ra, rb)
        merges.append((ra, rb, weight, size))
    return merges


def _condense_tree(
    merges: list[tuple[int, int, float, int]], n: int, min_cluster_size: int
) -> list[tuple[int, int, float, int]]:
    """Condensed cluster tree as (parent, child, lambda, child_size) rows.

    Children that fall below `min_cluster_size` leave their parent cluster as
    individual points at the split's lambda (= 1/distance); splits where both
    sides are large enough create new condensed clusters.
    """
    if not merges:
        return []
    children: dict[int, tuple[int, int]] = {}
    dist_of: dict[int, float] = {}
    size_of: dict[int, int] = {i: 1 for i in range(n)}
    for node, (left, right, distance, size) in enumerate(merges, start=n):
        children[node] = (left, right)
        dist_of[node] = distance
        size_of[node] = size

    def subtree_points(node: int) -> Iterable[int]:
        stack = [node]
        while stack:
            cur = stack.pop()
            if cur < n:
                yield cur
            else:
                stack.extend(children[cur])

    root = n + len(merges) - 1
    condensed: list[tuple[int, int, float, int]] = []
    next_cluster = 1
    # (dendrogram node, condensed cluster id); root cluster is 0
    stack: list[tuple[int, int]] = [(root, 0)]
    while stack:
        node, cluster = stack.pop()
        left, right = children[node]
        distance = dist_of[node]
        lam = 1.0 / distance if distance > 0.0 else np.inf
        left_size, right_size = size_of[left], size_of[right]

        big = [child for child in (left, right) if size_of[child] >= min_cluster_size]
        small = [child for child in (left, right) if size_of[child] < min_cluster_size]
        if len(big) == 2:
            # both sides are real clusters: the parent splits here
            for child, child_size in ((left, left_size), (right, right_size)):
                condensed.append((cluster, -next_cluster, lam, child_size))
                stack.append((child, next_cluster))
                next_cluster += 1
        else:
            # points on the small side fall out at this lambda; the big side,
            # if any, continues as the same condensed cluster
            for child in small:
                for point in subtree_points(child):
                    condensed.append((cluster, point, lam, 1))
            for child in big:
                stack.append((child, cluster))
    return condensed


def _extract_clusters(
    condensed: list[tuple[int, int, float, int]], n: int
) -> tuple[dict[int, int], int]:
    """Excess-of-mass selection over the condensed tree; returns point labels."""
    # cluster rows have negative child markers from _condense_tree
    birth: dict[int, float] = {0: 0.0}
    cluster_children: dict[int, list[int]] = {}
    stability: dict[int, float] = {}
    point_edges: list[tuple[int, int, float]] = []  # (cluster, point, lambda)

    for parent, child, lam, child_size in condensed:
        if child < 0:
            cluster = -child
            birth[cluster] = lam if np.isfinite(lam) else 0.0
            cluster_children.setdefault(parent, []).append(cluster)
        else:
            point_edges.append((parent, child, lam))

    for parent, _, lam, child_size in condensed:
        base = birth.get(parent, 0.0)
        contribution = (lam - base) * child_size
        if not np.isfinite(contribution):
            contribution = 0.0 if lam == base else np.inf
        stability[parent] = stability.get(parent, 0.0) + contribution

    all_clusters = sorted(set(birth) | set(cluster_children), reverse=True)
    selected: dict[int, bool] = {}
    subtree_stability = dict(stability)
    for cluster in all_clusters:
        kids = cluster_children.get(cluster, [])
        kid_total = sum(subtree_stability.get(kid, 0.0) for kid in kids)
        own = stability.get(cluster, 0.0)
        if cluster == 0:
            # the root is never selected; its points are noise unless a
            # descendant claims them
            selected[cluster] = False
            continue
        if kids and kid_total > own:
            subtree_stability[cluster] = kid_total
            selected[cluster] = False
        else:
            selected[cluster] = True

    # a selected ancestor absorbs its descendants
    parent_of_cluster: dict[int, int] = {}
    for parent, child, _, _ in condensed:
        if child < 0:
            parent_of_cluster[-child] = parent
    for cluster in sorted(parent_of_cluster):
        ancestor = parent_of_cluster[cluster]
        while ancestor != 0:
            if selected.get(ancestor, False):
                selected[cluster] = False
                break
            ancestor = parent_of_cluster.get(ancestor, 0)

    labels: dict[int, int] = {point: NOISE for point in range(n)}
    for cluster, point, _ in point_edges:
        node = cluster
        while node != 0:
            if selected.get(node, False):
                labels[point] = node
                break
            node = parent_of_cluster.get(node, 0)
    return labels, sum(1 for c, sel in selected.items() if sel)


def density_cluster_matrix(
    X: np.ndarray, min_cluster_size: int, min_samples: int | None = None
) -> np.ndarray:
    """Density-based flat clustering of a row matrix; returns labels, -1 = noise."""
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    n = X.shape[0]
    if n < min_cluster_size:
        return np.full(n, NOISE, dtype=np.int64)
    k = min_samples if min_samples is not None else min_cluster_size
    k = min(k, n - 1)
    X = np.ascontiguousarray(X, dtype=np.float64)
    sq_norms = np.sum(X * X, axis=1)

    core = _core_distances(X, sq_norms, k)
    edges = _mutual_reachability_mst(X, sq_norms, core)
    if all(weight == 0.0 for weight, _, _ in edges):
        # fully coincident points: one cluster, no noise
        return np.zeros(n, dtype=np.int64)
    merges = _single_linkage(edges, n)
    condensed = _condense_tree(merges, n, min_cluster_size)
    raw_labels, _ = _extract_clusters(condensed, n)
    # contiguous labels in order of first appearance
    remap: dict[int, int] = {}
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        raw = raw_labels[i]
        if raw == NOISE:
            labels[i] = NOISE
            continue
        if raw not in remap:
            remap[raw] = len(remap)
        labels[i] = remap[raw]
    return labels


def density_cluster(
    embeddings: EmbeddingSet, min_cluster_size: int, min_samples: int | None = None
) -> ClusterAssignment:
    raw = density_cluster_matrix(embeddings.matrix, min_cluster_size, min_samples)
    labels, n_clusters = _relabel_contiguous(embeddings.ids, raw)
    return ClusterAssignment(
        labels=labels,
        n_clusters=n_clusters,
        method=DENSITY,
        params={
            "min_cluster_size": min_cluster_size,
            "min_samples": min_samples if min_samples is not None else min_cluster_size,
        },
    )
