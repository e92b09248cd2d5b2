"""Fair score normalization: shift scores by the mean local-global threshold gap.

A comparison score s between samples i and j becomes

    s_hat = s - (delta_i + delta_j) / 2,   delta = local_thr(cluster) - global_thr

so pairs living in clusters whose operating point sits below the global
threshold get a boost, and pairs in easy clusters are pulled down. The final
decision stays "match iff s_hat >= global threshold". With a single cluster the
delta is exactly zero and every decision matches the unnormalized system.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import clustering
from .clustering import ClusterModel, assign, assign_many, fit_kmeans
from .data import EmbeddingDataset
from .errors import DataError, NumericError
from .pairs import PairScores, collect_cluster_score_sets, score_all_pairs
from .thresholds import ThresholdTable, build_threshold_table, default_min_impostor_count

MODEL_FORMAT_VERSION = 1


@dataclass
class FairNormModel:
    """Fitted artifact: cluster centroids plus their threshold table."""

    cluster_model: ClusterModel
    thresholds: ThresholdTable
    embedding_normalized: bool = True

    def __post_init__(self):
        if self.thresholds.k != self.cluster_model.k:
            raise NumericError(
                f"{self.thresholds.k} local thresholds for {self.cluster_model.k} clusters"
            )

    @property
    def k(self) -> int:
        return self.cluster_model.k

    @property
    def global_thr(self) -> float:
        return self.thresholds.global_thr


def fit(
    train: EmbeddingDataset,
    k: int,
    fmr_target: float = 1e-3,
    seed: int = 0,
    max_iters: int = clustering.DEFAULT_MAX_ITERS,
    tol: float = clustering.DEFAULT_TOL,
    min_impostor_count: int | None = None,
    workers: int = 1,
    train_pairs: PairScores | None = None,
) -> FairNormModel:
    """Cluster the training embeddings and compute per-cluster thresholds.

    `train_pairs` lets callers reuse already-computed pairwise scores (the
    k-sweep relies on this); when given it must come from score_all_pairs on
    the same dataset.
    """
    cluster_model = fit_kmeans(train, k, seed=seed, max_iters=max_iters, tol=tol)
    pairs = train_pairs if train_pairs is not None else score_all_pairs(train, workers=workers)
    assignments = assign_many(cluster_model, train.matrix)
    cluster_sets = collect_cluster_score_sets(pairs, assignments, k)
    table = build_threshold_table(
        cluster_sets,
        pairs.raw[~pairs.genuine],
        fmr_target=fmr_target,
        min_impostor_count=min_impostor_count,
    )
    return FairNormModel(cluster_model=cluster_model, thresholds=table)


def deltas_for_clusters(model: FairNormModel, cluster_ids: np.ndarray) -> np.ndarray:
    """Local-global threshold difference for each given cluster id."""
    return model.thresholds.local[cluster_ids] - model.thresholds.global_thr


def local_global_delta(model: FairNormModel, vector) -> float:
    """Threshold gap of the cluster the vector falls into: thr(cluster) - thr_G."""
    c = assign(model.cluster_model, vector)
    return float(model.thresholds.local[c] - model.thresholds.global_thr)


def normalize_score(model: FairNormModel, s_ij: float, vec_i, vec_j) -> float:
    """s - (delta_i + delta_j)/2, symmetric in the two samples."""
    di = local_global_delta(model, vec_i)
    dj = local_global_delta(model, vec_j)
    return s_ij - 0.5 * (di + dj)


def decide(model: FairNormModel, s_ij: float, vec_i, vec_j) -> bool:
    """True for match: normalized score >= the global threshold."""
    return normalize_score(model, s_ij, vec_i, vec_j) >= model.thresholds.global_thr


def compare(model: FairNormModel, vec_i, vec_j) -> tuple[float, float]:
    """Convenience wrapper: (raw cosine, normalized score) for two vectors."""
    from .pairs import cosine_similarity

    raw = cosine_similarity(vec_i, vec_j)
    return raw, normalize_score(model, raw, vec_i, vec_j)


def normalize_pair_scores(
    model: FairNormModel, pairs: PairScores, dataset: EmbeddingDataset
) -> PairScores:
    """Vectorized normalization of a whole pair set against one dataset."""
    cluster_ids = assign_many(model.cluster_model, dataset.matrix)
    delta = deltas_for_clusters(model, cluster_ids)
    normalized = pairs.raw - 0.5 * (delta[pairs.i] + delta[pairs.j])
    return pairs.with_normalized(normalized)


# ---------------------------------------------------------------------------
# Model persistence (versioned JSON)
# ---------------------------------------------------------------------------


def save_model(model: FairNormModel, path: str | Path) -> None:
    """Write the model as a versioned JSON document, full float precision."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "k": model.k,
        "dim": model.cluster_model.dim,
        "fmr_target": model.thresholds.fmr_target,
        "centroids": [[float(x) for x in row] for row in model.cluster_model.centroids],
        "local_thresholds": [float(x) for x in model.thresholds.local],
        "global_threshold": float(model.thresholds.global_thr),
        "fallback_flags": [bool(b) for b in model.thresholds.fallback],
        "seed": model.cluster_model.seed,
        "embedding_normalized": model.embedding_normalized,
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_model(path: str | Path) -> FairNormModel:
    """Load a model file, checking the format version and basic shape."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupted model file {path}: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise DataError(f"model file {path} has no format_version field")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise DataError(
            f"unsupported model format_version {doc['format_version']!r}, "
            f"this build reads version {MODEL_FORMAT_VERSION}"
        )
    try:
        k = int(doc["k"])
        dim = int(doc["dim"])
        centroids = np.array(doc["centroids"], dtype=np.float64)
        fmr_target = float(doc["fmr_target"])
        table = ThresholdTable(
            fmr_target=fmr_target,
            local=np.array(doc["local_thresholds"], dtype=np.float64),
            global_thr=float(doc["global_threshold"]),
            fallback=np.array(doc["fallback_flags"], dtype=bool),
            min_impostor_count=default_min_impostor_count(fmr_target),
        )
        seed = int(doc["seed"])
        embedding_normalized = bool(doc["embedding_normalized"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupted model file {path}: {exc!r}") from None
    if centroids.shape != (k, dim):
        raise DataError(
            f"model file {path}: centroid array shape {centroids.shape} "
            f"does not match k={k}, dim={dim}"
        )
    cluster_model = ClusterModel(
        k=k, centroids=centroids, seed=seed, iterations_run=0, converged=True
    )
    return FairNormModel(
        cluster_model=cluster_model,
        thresholds=table,
        embedding_normalized=embedding_normalized,
    )
