"""Unsupervised fair score normalization for biometric verification.

The pipeline: cluster the embedding space, compute a decision threshold per
cluster at a target false match rate, normalize comparison scores by the mean
local-global threshold difference of the two samples' clusters, and evaluate
both overall recognition performance and the demographic spread of errors.
"""

from .baselines import MinMaxStats, baseline_decide, fit_minmax, minmax_normalize, slf_fuse
from .clustering import ClusterModel, assign, assign_many, fit_kmeans
from .data import (
    EmbeddingDataset,
    FoldSplit,
    Sample,
    load_dataset,
    make_subject_disjoint_folds,
    save_dataset,
)
from .errors import DataError, FairnormError, NumericError
from .experiment import (
    AggregatedReport,
    ExperimentConfig,
    SweepResult,
    export_thresholds,
    run_experiment,
    sweep_k,
)
from .metrics import EvalReport, bias_reduction, evaluate, performance_change
from .normalization import (
    FairNormModel,
    decide,
    load_model,
    local_global_delta,
    normalize_score,
    save_model,
)
from .pairs import (
    ClusterScoreSets,
    PairScores,
    ScorePair,
    collect_cluster_score_sets,
    cosine_similarity,
    generate_all_pairs,
    score_all_pairs,
)
from .synth import SynthConfig, generate
from .thresholds import (
    ThresholdTable,
    build_threshold_table,
    fnmr_at_threshold,
    threshold_at_fmr,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatedReport",
    "ClusterModel",
    "ClusterScoreSets",
    "DataError",
    "EmbeddingDataset",
    "EvalReport",
    "ExperimentConfig",
    "FairNormModel",
    "FairnormError",
    "FoldSplit",
    "MinMaxStats",
    "NumericError",
    "PairScores",
    "Sample",
    "ScorePair",
    "SweepResult",
    "SynthConfig",
    "ThresholdTable",
    "assign",
    "assign_many",
    "baseline_decide",
    "bias_reduction",
    "build_threshold_table",
    "collect_cluster_score_sets",
    "cosine_similarity",
    "decide",
    "evaluate",
    "export_thresholds",
    "fit_kmeans",
    "fit_minmax",
    "fnmr_at_threshold",
    "generate",
    "generate_all_pairs",
    "load_dataset",
    "load_model",
    "local_global_delta",
    "make_subject_disjoint_folds",
    "minmax_normalize",
    "normalize_score",
    "performance_change",
    "run_experiment",
    "save_dataset",
    "save_model",
    "score_all_pairs",
    "slf_fuse",
    "sweep_k",
    "threshold_at_fmr",
]
