"""Decision thresholds anchored at a target false match rate.

The match rule everywhere in this package is "match iff score >= t". The
threshold achieving a target FMR is the smallest candidate value t, drawn from
the impostor scores themselves plus a supremum sentinel just above the maximum,
such that the fraction of impostor scores >= t does not exceed the target. Ties
are handled by that counting definition, never by interpolation.

Local thresholds are computed per cluster from its impostor score set; clusters
with too few impostor scores fall back to the global threshold, which turns the
normalization into a no-op for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .pairs import ClusterScoreSets


@dataclass
class ThresholdTable:
    """Per-cluster local thresholds plus the global threshold they fall back to."""

    fmr_target: float
    local: np.ndarray
    global_thr: float
    fallback: np.ndarray
    min_impostor_count: int

    def __post_init__(self):
        self.local = np.asarray(self.local, dtype=np.float64)
        self.fallback = np.asarray(self.fallback, dtype=bool)
        if self.local.shape != self.fallback.shape:
            raise NumericError("local thresholds and fallback flags disagree in length")
        if np.any(self.local[self.fallback] != self.global_thr):
            raise NumericError("fallback clusters must carry the global threshold")
        self.local.flags.writeable = False
        self.fallback.flags.writeable = False

    @property
    def k(self) -> int:
        return len(self.local)


def default_min_impostor_count(fmr_target: float) -> int:
    """ceil(1 / fmr_target): below this, the empirical quantile is vacuous."""
    return math.ceil(1.0 / fmr_target)


def threshold_at_fmr(impostor_scores, fmr_target: float) -> float:
    """Smallest threshold t with |{s >= t}| / n <= fmr_target.

    Candidates are the distinct score values plus nextafter(max) as the
    supremum sentinel (needed when even the top value is too heavily tied for
    any score to be allowed to match).
    """
    scores = np.asarray(impostor_scores, dtype=np.float64)
    if scores.size == 0:
        raise NumericError("cannot compute a threshold from an empty impostor set")
    if not 0.0 < fmr_target < 1.0:
        raise NumericError(f"fmr_target must be in (0, 1), got {fmr_target}")
    ordered = np.sort(scores)
    candidates = np.unique(ordered)
    candidates = np.append(candidates, np.nextafter(candidates[-1], np.inf))
    # counts of scores >= t are non-increasing in t, so the admissible region
    # is a suffix; argmax finds its first index.
    counts = scores.size - np.searchsorted(ordered, candidates, side="left")
    admissible = counts / scores.size <= fmr_target
    return float(candidates[np.argmax(admissible)])


def fmr_at_threshold(impostor_scores, t: float) -> float:
    """Fraction of impostor scores matching at t (score >= t)."""
    scores = np.asarray(impostor_scores, dtype=np.float64)
    if scores.size == 0:
        raise NumericError("empty impostor set")
    return float(np.count_nonzero(scores >= t) / scores.size)


def fnmr_at_threshold(genuine_scores, t: float) -> float:
    """Fraction of genuine scores rejected at t (score < t)."""
    scores = np.asarray(genuine_scores, dtype=np.float64)
    if scores.size == 0:
        raise NumericError("empty genuine set")
    return float(np.count_nonzero(scores < t) / scores.size)


def build_threshold_table(
    cluster_sets: list[ClusterScoreSets],
    global_impostors,
    fmr_target: float,
    min_impostor_count: int | None = None,
) -> ThresholdTable:
    """Local threshold per cluster, global threshold from the whole impostor set.

    A cluster whose impostor set is smaller than `min_impostor_count` (default
    ceil(1/fmr_target)) gets the global threshold and a fallback flag instead of
    a vacuous empirical quantile.
    """
    if min_impostor_count is None:
        min_impostor_count = default_min_impostor_count(fmr_target)
    if min_impostor_count < 1:
        raise NumericError(f"min_impostor_count must be positive, got {min_impostor_count}")
    global_thr = threshold_at_fmr(global_impostors, fmr_target)
    local = np.empty(len(cluster_sets), dtype=np.float64)
    fallback = np.zeros(len(cluster_sets), dtype=bool)
    for idx, cs in enumerate(cluster_sets):
        if cs.cluster_id != idx:
            raise NumericError("cluster score sets must be ordered by cluster_id")
        if len(cs.impostor_scores) >= min_impostor_count:
            local[idx] = threshold_at_fmr(cs.impostor_scores, fmr_target)
        else:
            local[idx] = global_thr
            fallback[idx] = True
    return ThresholdTable(
        fmr_target=fmr_target,
        local=local,
        global_thr=global_thr,
        fallback=fallback,
        min_impostor_count=min_impostor_count,
    )
