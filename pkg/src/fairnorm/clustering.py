"""Seeded k-means on the unit sphere, with deterministic assignment.

Embeddings are L2-normalized before clustering so that Euclidean k-means
respects the cosine geometry used for scoring. Initialization is k-means++
driven by the caller's seed; an emptied cluster is repaired by donating the
sample farthest from its currently assigned centroid. Identical inputs produce
bit-identical centroids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import EmbeddingDataset
from .errors import NumericError

DEFAULT_MAX_ITERS = 300
DEFAULT_TOL = 1e-4

# Samples-per-chunk for distance computations; bounds temporary memory at
# chunk * k * dim floats without affecting results.
_ASSIGN_CHUNK = 512


@dataclass
class ClusterModel:
    """Fitted k-means state: the individuality parameter k and its centroids."""

    k: int
    centroids: np.ndarray
    seed: int
    iterations_run: int
    converged: bool
    inertia_history: tuple[float, ...] = field(default=(), repr=False)
    metric_space: str = "l2_on_unit_sphere"

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.shape[0] != self.k:
            raise NumericError(
                f"expected {self.k} centroids, got {self.centroids.shape[0]}"
            )
        if not np.all(np.isfinite(self.centroids)):
            raise NumericError("non-finite centroid")
        self.centroids.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exact squared L2 distances, chunked over points.

    Uses the plain (x - c)^2 form rather than the dot-product expansion: it is
    slightly slower but keeps exact ties exact, which the tie-break contract
    (lowest cluster id wins) relies on.
    """
    out = np.empty((points.shape[0], centroids.shape[0]), dtype=np.float64)
    for a in range(0, points.shape[0], _ASSIGN_CHUNK):
        b = min(a + _ASSIGN_CHUNK, points.shape[0])
        diff = points[a:b, None, :] - centroids[None, :, :]
        out[a:b] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _kmeanspp_init(unit: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = unit.shape[0]
    centroids = np.empty((k, unit.shape[1]), dtype=np.float64)
    centroids[0] = unit[rng.integers(n)]
    diff = unit - centroids[0]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for c in range(1, k):
        total = d2.sum()
        if total > 0.0:
            pick = rng.choice(n, p=d2 / total)
        else:
            pick = rng.integers(n)  # all points coincide with chosen centroids
        centroids[c] = unit[pick]
        diff = unit - centroids[c]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return centroids


def _repair_empty(labels: np.ndarray, dist_own: np.ndarray, k: int) -> np.ndarray:
    """Donate far-out samples to emptied clusters.

    The donor is the sample farthest from its assigned centroid whose cluster
    would not be emptied by losing it. Pinning the donor keeps the recorded
    inertia monotone: the donated sample's distance term drops to zero while
    every other term is unchanged.
    """
    sizes = np.bincount(labels, minlength=k)
    if sizes.min() > 0:
        return labels
    labels = labels.copy()
    dist_own = dist_own.copy()
    for c in np.flatnonzero(sizes == 0):
        eligible = sizes[labels] > 1
        if not eligible.any():
            eligible = np.ones(len(labels), dtype=bool)
        candidates = np.where(eligible, dist_own, -np.inf)
        donor = int(np.argmax(candidates))
        sizes[labels[donor]] -= 1
        labels[donor] = c
        sizes[c] = 1
        dist_own[donor] = -np.inf
    return labels


def fit_kmeans(
    train: EmbeddingDataset | np.ndarray,
    k: int,
    seed: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> ClusterModel:
    """Lloyd iterations until max centroid displacement < tol or max_iters.

    The recorded inertia sequence (sum of squared distances to assigned
    centroids, taken after each assignment step) is monotone non-increasing.
    Every cluster holds at least one sample under the fit's final labeling.
    """
    matrix = train.matrix if isinstance(train, EmbeddingDataset) else np.asarray(train)
    n = matrix.shape[0]
    if k < 1:
        raise NumericError(f"k must be at least 1, got {k}")
    if k > n:
        raise NumericError(f"k={k} exceeds the {n} training samples")
    from .pairs import unit_rows

    unit = unit_rows(matrix.astype(np.float64))
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(unit, k, rng)

    inertia_history: list[float] = []
    iterations = 0
    converged = False
    for iterations in range(1, max_iters + 1):
        d2 = _squared_distances(unit, centroids)
        labels = d2.argmin(axis=1)  # argmin takes the lowest index on ties
        dist_own = d2[np.arange(n), labels]
        inertia_history.append(float(dist_own.sum()))
        labels = _repair_empty(labels, dist_own, k)

        new_centroids = np.empty_like(centroids)
        for c in range(k):
            new_centroids[c] = unit[labels == c].mean(axis=0)

        shift = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        if shift < tol:
            converged = True
            break

    return ClusterModel(
        k=k,
        centroids=centroids,
        seed=seed,
        iterations_run=iterations,
        converged=converged,
        inertia_history=tuple(inertia_history),
    )


def assign_many(model: ClusterModel, vectors: np.ndarray) -> np.ndarray:
    """Nearest-centroid ids for each row, ties broken toward the lowest id."""
    from .pairs import unit_rows

    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != model.dim:
        raise NumericError(
            f"expected vectors of dimension {model.dim}, got shape {mat.shape}"
        )
    unit = unit_rows(mat)
    return _squared_distances(unit, model.centroids).argmin(axis=1)


def assign(model: ClusterModel, vector) -> int:
    """Cluster id of a single vector (the input is L2-normalized first)."""
    return int(assign_many(model, np.asarray(vector, dtype=np.float64)[None, :])[0])


def inertia(model: ClusterModel, data: EmbeddingDataset | np.ndarray) -> float:
    """Sum of squared distances from each (normalized) point to its nearest centroid."""
    matrix = data.matrix if isinstance(data, EmbeddingDataset) else np.asarray(data)
    from .pairs import unit_rows

    unit = unit_rows(matrix.astype(np.float64))
    return float(_squared_distances(unit, model.centroids).min(axis=1).sum())
