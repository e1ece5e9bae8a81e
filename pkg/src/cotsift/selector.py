"""Deterministic seeded selection strategies over annotated corpora.

Every selector returns exactly `n` distinct example ids, all present in its
input, sorted ascending. Randomness always flows through a generator seeded
from the caller's 64-bit seed, so identical (corpus, spec) pairs produce
identical id lists across runs and platforms. Weighted sampling without
replacement uses exponential keys: key = -ln(u)/w, take the n smallest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Mapping, Sequence

import numpy as np

from .annotator import AGREE, DISAGREE, AnnotationSet
from .clustering import ClusterAssignment
from .corpus import ReasoningExample, word_count
from .embedder import EmbeddingSet, nearest_neighbors
from .errors import BadConfig, NTooLarge

logger = logging.getLogger(__name__)

STRATEGIES = (
    "random",
    "topic_uniform",
    "cluster_stratified",
    "strategy_diverse",
    "length_weighted",
    "verbosity_band",
    "agreement",
    "strategy_count_bucket",
    "short_reference",
    "nn_seeded",
)

VERBOSITY_BANDS = ("low", "med", "high")
COUNT_BUCKETS = ("low", "med", "high")

SHORT_REFERENCE_MAX_WORDS = 9

# strategy-count bucket edges: low < 5, 5 <= med <= 8, high > 8
BUCKET_LOW_BELOW = 5
BUCKET_HIGH_ABOVE = 8


@dataclass
class LengthSamplingParams:
    """Length-weighted sampling: p = min(1, (l / c_norm) ** tau)."""

    c_norm: float = 5000.0
    tau: float = 2.5

    def __post_init__(self) -> None:
        if self.c_norm <= 0:
            raise BadConfig("c_norm must be positive")
        if self.tau < 0:
            raise BadConfig("tau must be >= 0")


@dataclass
class StrategyDiversityParams:
    """Band and density downweights for strategy-diversity sampling."""

    r_min: int = 4
    r_max: int = 8
    downweight: float = 0.25
    density_downweight: float = 0.5

    def __post_init__(self) -> None:
        if not 0 <= self.r_min <= self.r_max:
            raise BadConfig("need 0 <= r_min <= r_max")
        for name in ("downweight", "density_downweight"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise BadConfig(f"{name} must be in (0, 1]")


@dataclass
class SelectionSpec:
    """Declarative description of one selection run."""

    strategy: str
    n: int
    seed: int = 0
    params: dict = dataclass_field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise BadConfig(f"unknown selection strategy {self.strategy!r}")
        if self.n < 1:
            raise BadConfig("selection size n must be >= 1")

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "n": self.n, "seed": self.seed, "params": self.params}


def _check_n(n: int, available: int, what: str = "corpus") -> None:
    if n > available:
        raise NTooLarge(f"requested {n} ids but {what} has {available}")


def _uniform_subset(ids: Sequence[str], n: int, rng: np.random.Generator) -> list[str]:
    """Uniform sample without replacement; output sorted ascending."""
    ordered = sorted(ids)
    picked = rng.permutation(len(ordered))[:n]
    return sorted(ordered[i] for i in picked)


def select_random(corpus_ids: Sequence[str], n: int, seed: int) -> list[str]:
    _check_n(n, len(corpus_ids))
    return _uniform_subset(corpus_ids, n, np.random.default_rng(seed))


def allocate_quotas(sizes: Mapping[object, int], n: int) -> dict[object, int]:
    """Equal per-stratum quotas for a total of exactly n.

    The base quota is n // D with the remainder going to the largest strata.
    Strata smaller than their quota contribute everything; the deficit is
    redistributed round-robin over the remaining strata in descending size
    order. Requires sum(sizes) >= n.
    """
    strata = sorted(sizes, key=lambda s: (-sizes[s], str(s)))
    base, remainder = divmod(n, len(strata))
    take = {}
    for i, stratum in enumerate(strata):
        quota = base + (1 if i < remainder else 0)
        take[stratum] = min(quota, sizes[stratum])
    deficit = n - sum(take.values())
    while deficit > 0:
        progressed = False
        for stratum in strata:
            if deficit == 0:
                break
            if take[stratum] < sizes[stratum]:
                take[stratum] += 1
                deficit -= 1
                progressed = True
        if not progressed:
            raise NTooLarge(f"strata hold {sum(sizes.values())} records, need {n}")
    return take


def _stratified(groups: Mapping[object, list[str]], n: int, seed: int) -> list[str]:
    total = sum(len(ids) for ids in groups.values())
    _check_n(n, total)
    quotas = allocate_quotas({s: len(ids) for s, ids in groups.items()}, n)
    rng = np.random.default_rng(seed)
    picked: list[str] = []
    # iterate strata in deterministic key order; each stratum gets its own draw
    for stratum in sorted(groups, key=str):
        picked.extend(_uniform_subset(groups[stratum], quotas[stratum], rng))
    return sorted(picked)


def select_topic_uniform(annotations: Sequence[AnnotationSet], n: int, seed: int) -> list[str]:
    """Equal per-discipline quotas over whatever disciplines are present."""
    groups: dict[str, list[str]] = {}
    for annotation in annotations:
        groups.setdefault(annotation.discipline, []).append(annotation.example_id)
    return _stratified(groups, n, seed)


def select_cluster_stratified(clusters: ClusterAssignment, n: int, seed: int) -> list[str]:
    """Equal per-cluster quotas; noise (-1) is pooled as one stratum."""
    return _stratified(clusters.strata(), n, seed)


def strategy_weight(annotation: AnnotationSet, params: StrategyDiversityParams) -> float:
    """Sampling weight in (0, 1] for the strategy-diversity criterion.

    Records outside the (r_min, r_max] strategy-count band are downweighted,
    as are low reasoning-density records (fewer unique strategies than
    annotated steps).
    """
    weight = 1.0
    count = annotation.strategy_count
    if count <= params.r_min or count > params.r_max:
        weight *= params.downweight
    if count < annotation.step_count:
        weight *= params.density_downweight
    return weight


def select_strategy_diverse(
    annotations: Sequence[AnnotationSet],
    n: int,
    params: StrategyDiversityParams,
    seed: int,
) -> list[str]:
    """Weighted sampling without replacement via exponential keys."""
    _check_n(n, len(annotations))
    ordered = sorted(annotations, key=lambda a: a.example_id)
    weights = np.array([strategy_weight(a, params) for a in ordered])
    rng = np.random.default_rng(seed)
    u = rng.random(len(ordered))
    keys = -np.log1p(-u) / weights
    picked = np.argsort(keys, kind="stable")[:n]
    return sorted(ordered[i].example_id for i in picked)


def length_probability(length: float, params: LengthSamplingParams) -> float:
    """Retention probability for a reasoning response of `length` tokens."""
    if length < 0:
        raise ValueError("length must be >= 0")
    return min(1.0, (length / params.c_norm) ** params.tau)


def length_retention_mask(
    lengths: Sequence[float], params: LengthSamplingParams, seed: int
) -> np.ndarray:
    """Independent Bernoulli retention per record, in the order given."""
    rng = np.random.default_rng(seed)
    u = rng.random(len(lengths))
    probs = np.array([length_probability(length, params) for length in lengths])
    return u < probs


def select_by_length(
    annotations: Sequence[AnnotationSet],
    n: int,
    params: LengthSamplingParams,
    seed: int,
) -> list[str]:
    """Downsample short reasoning responses, then fill to exactly n.

    Records survive an independent Bernoulli draw with probability
    min(1, (l/C)^tau). When too few survive, rejected records are re-admitted
    in descending probability; when too many, a uniform seeded draw trims the
    candidate set.
    """
    _check_n(n, len(annotations))
    ordered = sorted(annotations, key=lambda a: a.example_id)
    lengths = [a.think_token_len for a in ordered]
    mask = length_retention_mask(lengths, params, seed)
    candidates = [a.example_id for a, keep in zip(ordered, mask) if keep]
    if len(candidates) < n:
        rejected = [
            (a.example_id, length_probability(a.think_token_len, params))
            for a, keep in zip(ordered, mask)
            if not keep
        ]
        rejected.sort(key=lambda pair: (-pair[1], pair[0]))
        candidates.extend(example_id for example_id, _ in rejected[: n - len(candidates)])
        return sorted(candidates)
    return _uniform_subset(candidates, n, np.random.default_rng([seed, 1]))


# med starts at score 5 and expands outward, nearer scores first
_MED_ORDER = (5, 4, 6, 3, 7, 2, 8, 1, 9, 0, 10)


def select_by_verbosity(
    annotations: Sequence[AnnotationSet], n: int, band: str, seed: int = 0
) -> list[str]:
    """Greedy fill across verbosity tiers: low ascends from 0, high descends
    from 10, med takes every score-5 record and expands outward."""
    if band not in VERBOSITY_BANDS:
        raise BadConfig(f"unknown verbosity band {band!r}")
    _check_n(n, len(annotations))
    if band == "low":
        order = range(0, 11)
    elif band == "high":
        order = range(10, -1, -1)
    else:
        order = _MED_ORDER
    tiers: dict[int, list[str]] = {}
    for annotation in annotations:
        tiers.setdefault(annotation.verbosity, []).append(annotation.example_id)
    rng = np.random.default_rng(seed)
    picked: list[str] = []
    for score in order:
        tier = tiers.get(score, [])
        remaining = n - len(picked)
        if remaining <= 0:
            break
        if len(tier) <= remaining:
            picked.extend(tier)
        else:
            picked.extend(_uniform_subset(tier, remaining, rng))
    return sorted(picked)


def select_by_agreement(
    annotations: Sequence[AnnotationSet], n: int, want: str, seed: int
) -> list[str]:
    if want not in (AGREE, DISAGREE):
        raise BadConfig(f"agreement selection wants 'agree' or 'disagree', got {want!r}")
    matching = [a.example_id for a in annotations if a.agreement == want]
    _check_n(n, len(matching), f"verdict class {want!r}")
    return _uniform_subset(matching, n, np.random.default_rng(seed))


def filter_short_reference(
    examples: Sequence[ReasoningExample], max_words: int = SHORT_REFERENCE_MAX_WORDS
) -> list[str]:
    """Ids whose reference answer has at most `max_words` words.

    A proxy for easy-to-verify problems. Records without a reference answer
    are excluded with a warning. Composable with any selector by
    intersection.
    """
    missing = 0
    passing: list[str] = []
    for example in examples:
        if example.reference_answer is None:
            missing += 1
            continue
        if word_count(example.reference_answer) <= max_words:
            passing.append(example.id)
    if missing:
        logger.warning("%d records lack a reference answer; excluded from filter", missing)
    return sorted(passing)


def strategy_count_bucket(count: int) -> str:
    if count < BUCKET_LOW_BELOW:
        return "low"
    if count > BUCKET_HIGH_ABOVE:
        return "high"
    return "med"


def select_strategy_count_bucket(
    annotations: Sequence[AnnotationSet], n: int, bucket: str, seed: int
) -> list[str]:
    if bucket not in COUNT_BUCKETS:
        raise BadConfig(f"unknown strategy-count bucket {bucket!r}")
    matching = [
        a.example_id for a in annotations if strategy_count_bucket(a.strategy_count) == bucket
    ]
    _check_n(n, len(matching), f"bucket {bucket!r}")
    return _uniform_subset(matching, n, np.random.default_rng(seed))


def select_nn_seeded(
    embeddings: EmbeddingSet, seeds: Mapping[str, np.ndarray], n: int
) -> list[str]:
    """Grow a subset around seed questions by interleaved nearest neighbors.

    Seeds contribute their rank-1 neighbors first, then rank-2, and so on
    (duplicates skipped) until n distinct ids accumulate. Deterministic: no
    randomness, ties broken by ascending id inside each neighbor list.
    """
    _check_n(n, len(embeddings))
    if not seeds:
        raise BadConfig("nn_seeded selection requires at least one seed vector")
    per_seed = nearest_neighbors(seeds, embeddings, k=len(embeddings))
    picked: list[str] = []
    seen: set[str] = set()
    for rank in range(len(embeddings)):
        for seed_id in sorted(per_seed):
            neighbor = per_seed[seed_id][rank]
            if neighbor not in seen:
                seen.add(neighbor)
                picked.append(neighbor)
                if len(picked) == n:
                    return sorted(picked)
    return sorted(picked)
