"""Reference systems: the unnormalized global threshold and min-max sum fusion.

The fusion baseline (SLF) min-max normalizes each system's scores using ranges
estimated on training scores, then sums. Test scores outside the training range
are deliberately not clipped so the score ordering is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericError


@dataclass(frozen=True)
class MinMaxStats:
    """Per-system score range estimated on training scores."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise NumericError(f"degenerate score range [{self.lo}, {self.hi}]")


def baseline_decide(s_ij: float, thr_g: float) -> bool:
    """Unnormalized decision: match iff the raw score reaches the global threshold."""
    return s_ij >= thr_g


def fit_minmax(train_scores) -> MinMaxStats:
    """Observed [min, max] of the training scores; needs two distinct values."""
    scores = np.asarray(train_scores, dtype=np.float64)
    if scores.size < 2:
        raise NumericError("need at least 2 training scores to fit a min-max range")
    lo = float(scores.min())
    hi = float(scores.max())
    if hi == lo:
        raise NumericError(f"all {scores.size} training scores equal {lo}; range is degenerate")
    return MinMaxStats(lo=lo, hi=hi)


def minmax_normalize(score, stats: MinMaxStats):
    """(s - lo) / (hi - lo); out-of-range scores map outside [0, 1], unclipped."""
    return (np.asarray(score, dtype=np.float64) - stats.lo) / (stats.hi - stats.lo)


def slf_fuse(
    scores_per_system: Sequence[float], stats_per_system: Sequence[MinMaxStats]
) -> float:
    """Sum of per-system min-max normalized scores."""
    if len(scores_per_system) != len(stats_per_system):
        raise NumericError(
            f"{len(scores_per_system)} scores for {len(stats_per_system)} systems"
        )
    if len(scores_per_system) < 2:
        raise NumericError("score-level fusion needs at least 2 systems")
    return float(
        sum(
            float(minmax_normalize(s, st))
            for s, st in zip(scores_per_system, stats_per_system)
        )
    )


def slf_fuse_arrays(
    scores_per_system: Sequence[np.ndarray], stats_per_system: Sequence[MinMaxStats]
) -> np.ndarray:
    """Vectorized fusion over aligned score arrays, one array per system."""
    if len(scores_per_system) != len(stats_per_system):
        raise NumericError(
            f"{len(scores_per_system)} score arrays for {len(stats_per_system)} systems"
        )
    if len(scores_per_system) < 2:
        raise NumericError("score-level fusion needs at least 2 systems")
    out = minmax_normalize(scores_per_system[0], stats_per_system[0])
    for s, st in zip(scores_per_system[1:], stats_per_system[1:]):
        out = out + minmax_normalize(s, st)
    return out
