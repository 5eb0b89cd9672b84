"""Gradient aggregation: plain averaging and agreement filtering.

Agreement filtering starts from a pivot micro-gradient and walks the
remaining candidates in ascending index order. Each candidate is compared
against the *running sum* of everything accepted so far; it is admitted
when its cosine distance to that sum is <= tau. If nothing beyond the
pivot is admitted the whole macrobatch is skipped. The scan is therefore
order dependent: `gaf_aggregate_all_pivots` exposes how much the outcome
moves with the pivot choice.

A threshold of 2 admits every candidate, which makes filtering equivalent
to plain averaging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gradvec import GradVec, as_gradvec, cosine_distance


@dataclass(frozen=True)
class GafConfig:
    """Agreement-filter settings.

    tau: cosine-distance acceptance threshold in [0, 2].
    pivot: index of the micro-gradient that seeds the running sum, or None
        to draw it uniformly from a generator seeded with rng_seed.
    """

    tau: float
    pivot: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.tau <= 2.0:
            raise ValueError(f"tau must be in [0, 2], got {self.tau}")
        if self.pivot is not None and self.pivot < 0:
            raise ValueError("pivot index must be non-negative")


@dataclass
class AggregationOutcome:
    """Result of one macrobatch aggregation.

    gradient is None exactly when the step was skipped (accepted_count == 1).
    pairwise_distances holds the cosine distance of every non-pivot
    candidate against the running sum at the moment it was evaluated, in
    evaluation order, whether or not it was accepted.
    """

    gradient: GradVec | None
    accepted_count: int
    accepted_mask: list[bool]
    pairwise_distances: list[float]
    skipped: bool
    pivot: int = field(default=0)


def _validated(grads: list[GradVec]) -> list[GradVec]:
    if len(grads) == 0:
        raise ValueError("no gradients to aggregate")
    vecs = [as_gradvec(g) for g in grads]
    dim = vecs[0].shape[0]
    for i, v in enumerate(vecs):
        if v.shape[0] != dim:
            raise ValueError(f"dimension mismatch at index {i}: {v.shape[0]} vs {dim}")
    return vecs


def average(grads: list[GradVec]) -> GradVec:
    """Elementwise mean: sum in index order, then divide by the count."""
    vecs = _validated(grads)
    acc = vecs[0].copy()
    for v in vecs[1:]:
        acc += v
    return acc / len(vecs)


def gaf_aggregate(grads: list[GradVec], cfg: GafConfig) -> AggregationOutcome:
    """Filter micro-gradients by cosine agreement with the running sum.

    Deterministic given the gradient order and cfg (the pivot draw comes
    from a generator owned by cfg.rng_seed, never global state).
    """
    vecs = _validated(grads)
    k = len(vecs)
    if cfg.pivot is None:
        pivot = int(np.random.default_rng(cfg.rng_seed).integers(k))
    else:
        if cfg.pivot >= k:
            raise ValueError(f"pivot {cfg.pivot} out of range for k={k}")
        pivot = cfg.pivot

    running = vecs[pivot].copy()
    count = 1
    mask = [False] * k
    mask[pivot] = True
    distances: list[float] = []
    for i in range(k):
        if i == pivot:
            continue
        d = cosine_distance(vecs[i], running)
        distances.append(d)
        if d <= cfg.tau:
            running += vecs[i]
            count += 1
            mask[i] = True

    if count > 1:
        return AggregationOutcome(
            gradient=running / count,
            accepted_count=count,
            accepted_mask=mask,
            pairwise_distances=distances,
            skipped=False,
            pivot=pivot,
        )
    return AggregationOutcome(
        gradient=None,
        accepted_count=1,
        accepted_mask=mask,
        pairwise_distances=distances,
        skipped=True,
        pivot=pivot,
    )


def gaf_aggregate_all_pivots(grads: list[GradVec], tau: float) -> list[AggregationOutcome]:
    """One aggregation per pivot choice, for probing order sensitivity."""
    vecs = _validated(grads)
    return [gaf_aggregate(vecs, GafConfig(tau=tau, pivot=s)) for s in range(len(vecs))]


def running_scan_distances(grads: list[GradVec]) -> list[float]:
    """Cosine distances of each gradient against the index-order running sum.

    Mirrors the agreement scan with pivot 0 and an all-admitting threshold.
    Used to log pairwise disagreement for plain-averaging runs.
    """
    vecs = _validated(grads)
    running = vecs[0].copy()
    distances = []
    for v in vecs[1:]:
        distances.append(cosine_distance(v, running))
        running += v
    return distances
