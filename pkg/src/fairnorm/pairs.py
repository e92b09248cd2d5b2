"""Comparison pairs: cosine scoring, exhaustive pair generation, cluster score sets.

All C(n,2) unordered pairs are evaluated. Scores are computed in 64-bit floats
regardless of how vectors are stored, since quantile thresholds at small FMR
targets are sensitive to ties. A pair contributes to a cluster's genuine or
impostor score set whenever at least one of its endpoints is assigned to that
cluster, so a pair spanning two clusters is counted in both.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from .data import EmbeddingDataset
from .errors import NumericError

# Row-block size for the blocked pairwise scoring. Fixed (never derived from the
# worker count) so results are bit-identical regardless of parallelism.
_BLOCK = 256


@dataclass(frozen=True)
class ScorePair:
    """One comparison between dataset samples i and j (canonicalized to i < j)."""

    i: int
    j: int
    raw_score: float
    genuine: bool
    normalized_score: float | None = None

    def __post_init__(self):
        if self.i == self.j:
            raise NumericError(f"a pair needs two distinct samples, got i == j == {self.i}")
        if self.i > self.j:
            lo, hi = self.j, self.i
            object.__setattr__(self, "i", lo)
            object.__setattr__(self, "j", hi)
        if not np.isfinite(self.raw_score) or abs(self.raw_score) > 1.0 + 1e-6:
            raise NumericError(f"raw score {self.raw_score!r} outside [-1, 1]")


@dataclass
class PairScores:
    """Column-oriented view of a pair set: parallel arrays over all pairs.

    `i` and `j` hold sample indices into the originating dataset (i < j,
    lexicographic emission order), `raw` the cosine scores, `genuine` the
    same-subject flags. `normalized` stays None until a model has run.
    """

    i: np.ndarray
    j: np.ndarray
    raw: np.ndarray
    genuine: np.ndarray
    normalized: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.raw)

    def scores(self, score_field: str) -> np.ndarray:
        if score_field == "raw":
            return self.raw
        if score_field == "normalized":
            if self.normalized is None:
                raise NumericError("normalized scores requested but none were computed")
            return self.normalized
        raise NumericError(f"unknown score_field {score_field!r}, expected 'raw' or 'normalized'")

    def with_normalized(self, normalized: np.ndarray) -> "PairScores":
        return replace(self, normalized=np.asarray(normalized, dtype=np.float64))

    def iter_pairs(self) -> Iterator[ScorePair]:
        norm = self.normalized
        for idx in range(len(self.raw)):
            yield ScorePair(
                i=int(self.i[idx]),
                j=int(self.j[idx]),
                raw_score=float(self.raw[idx]),
                genuine=bool(self.genuine[idx]),
                normalized_score=None if norm is None else float(norm[idx]),
            )

    @classmethod
    def from_pairs(cls, pairs: Iterable[ScorePair]) -> "PairScores":
        ii, jj, raw, gen, norm = [], [], [], [], []
        for p in pairs:
            ii.append(p.i)
            jj.append(p.j)
            raw.append(p.raw_score)
            gen.append(p.genuine)
            norm.append(p.normalized_score)
        has_norm = any(x is not None for x in norm)
        if has_norm and any(x is None for x in norm):
            raise NumericError("pair stream mixes normalized and non-normalized pairs")
        return cls(
            i=np.array(ii, dtype=np.int64),
            j=np.array(jj, dtype=np.int64),
            raw=np.array(raw, dtype=np.float64),
            genuine=np.array(gen, dtype=bool),
            normalized=np.array(norm, dtype=np.float64) if has_norm else None,
        )


def cosine_similarity(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """dot(a, b) / (|a| |b|) in float64; raises on dimension mismatch or zero norm."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise NumericError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise NumericError("cosine similarity of a zero-norm vector is undefined")
    return float(np.dot(va, vb) / (na * nb))


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """L2-normalize each row; raises if any row has zero norm."""
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0))
        raise NumericError(f"zero-norm vector at row {bad}")
    return matrix / norms[:, None]


def _resolve_subset(dataset: EmbeddingDataset, sample_subset) -> np.ndarray:
    if sample_subset is None:
        return np.arange(len(dataset), dtype=np.int64)
    idx = np.array(sorted(int(i) for i in sample_subset), dtype=np.int64)
    if len(idx) and (idx[0] < 0 or idx[-1] >= len(dataset)):
        raise NumericError("sample subset references an index outside the dataset")
    if len(np.unique(idx)) != len(idx):
        raise NumericError("sample subset contains duplicate indices")
    return idx


def _score_block(unit: np.ndarray, codes: np.ndarray, idx: np.ndarray, a: int, b: int):
    """Pairs (i, j) for all rows i in [a, b), j > i, against the full matrix."""
    block = unit[a:b] @ unit.T
    ii, jj, raw, gen = [], [], [], []
    for local, row_i in enumerate(range(a, b)):
        ii.append(np.full(len(idx) - row_i - 1, idx[row_i], dtype=np.int64))
        jj.append(idx[row_i + 1:])
        raw.append(block[local, row_i + 1:])
        gen.append(codes[row_i + 1:] == codes[row_i])
    return ii, jj, raw, gen


def _pair_blocks(dataset: EmbeddingDataset, sample_subset):
    idx = _resolve_subset(dataset, sample_subset)
    if len(idx) < 2:
        raise NumericError(f"need at least 2 samples to form pairs, got {len(idx)}")
    unit = unit_rows(dataset.matrix[idx])
    codes = dataset.subject_codes[idx]
    jobs = [(a, min(a + _BLOCK, len(idx) - 1)) for a in range(0, len(idx) - 1, _BLOCK)]
    return unit, codes, idx, jobs


def generate_all_pairs(
    dataset: EmbeddingDataset, sample_subset: Iterable[int] | None = None
) -> Iterator[ScorePair]:
    """Stream every unordered pair exactly once, lexicographic by (i, j).

    Memory stays O(block x n) rather than O(n^2): scores are computed one row
    block at a time and yielded immediately. The `genuine` flag is set from the
    subject IDs. Values are bit-identical to score_all_pairs, which shares the
    same blocked computation.
    """
    unit, codes, idx, jobs = _pair_blocks(dataset, sample_subset)
    for a, b in jobs:
        ii, jj, raw, gen = _score_block(unit, codes, idx, a, b)
        for irow, jrow, rrow, grow in zip(ii, jj, raw, gen):
            for off in range(len(rrow)):
                yield ScorePair(
                    i=int(irow[off]),
                    j=int(jrow[off]),
                    raw_score=float(rrow[off]),
                    genuine=bool(grow[off]),
                )


def score_all_pairs(
    dataset: EmbeddingDataset,
    sample_subset: Iterable[int] | None = None,
    workers: int = 1,
) -> PairScores:
    """All pairwise cosine scores as arrays, same pair order as generate_all_pairs.

    Work is partitioned into fixed-size row blocks and merged in block order, so
    the result is identical for any worker count.
    """
    unit, codes, idx, jobs = _pair_blocks(dataset, sample_subset)
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: _score_block(unit, codes, idx, *ab), jobs))
    else:
        parts = [_score_block(unit, codes, idx, a, b) for a, b in jobs]
    ii = np.concatenate([x for p in parts for x in p[0]])
    jj = np.concatenate([x for p in parts for x in p[1]])
    raw = np.concatenate([x for p in parts for x in p[2]])
    gen = np.concatenate([x for p in parts for x in p[3]])
    return PairScores(i=ii, j=jj, raw=raw, genuine=gen)


@dataclass
class ClusterScoreSets:
    """Genuine and impostor score multisets attached to one cluster."""

    cluster_id: int
    genuine_scores: np.ndarray
    impostor_scores: np.ndarray


def collect_cluster_score_sets(
    pairs: PairScores | Iterable[ScorePair],
    assignments: np.ndarray | Sequence[int],
    k: int,
    score_field: str = "raw",
) -> list[ClusterScoreSets]:
    """Materialize per-cluster genuine/impostor score sets.

    `assignments` maps sample index -> cluster id in [0, k); every sample
    referenced by a pair must be assigned. A pair with endpoints in two
    different clusters contributes its score to both; a pair inside one
    cluster is counted there once.
    """
    ps = pairs if isinstance(pairs, PairScores) else PairScores.from_pairs(pairs)
    assign = np.asarray(assignments, dtype=np.int64)
    if len(ps) == 0:
        return [
            ClusterScoreSets(c, np.empty(0), np.empty(0)) for c in range(k)
        ]
    hi = max(int(ps.i.max()), int(ps.j.max()))
    if hi >= len(assign):
        raise NumericError(f"pair references sample {hi} with no cluster assignment")
    ci = assign[ps.i]
    cj = assign[ps.j]
    for side in (ci, cj):
        if side.min() < 0 or side.max() >= k:
            raise NumericError("cluster assignment outside [0, k)")
    scores = ps.scores(score_field)
    out = []
    for c in range(k):
        member = (ci == c) | (cj == c)
        out.append(
            ClusterScoreSets(
                cluster_id=c,
                genuine_scores=scores[member & ps.genuine],
                impostor_scores=scores[member & ~ps.genuine],
            )
        )
    return out


def dump_scores(pairs: PairScores, out) -> None:
    """Write the debugging CSV `i,j,raw_score,genuine`."""
    out.write("i,j,raw_score,genuine\n")
    for idx in range(len(pairs)):
        flag = "true" if pairs.genuine[idx] else "false"
        out.write(f"{int(pairs.i[idx])},{int(pairs.j[idx])},{pairs.raw[idx]!r},{flag}\n")
