"""Cross-validated experiment protocol and the individuality-parameter sweep.

Per fold, everything learned (clusters, thresholds, min-max ranges) comes from
the train split only; the test split is scored, optionally normalized, and
evaluated. Reports are aggregated cell-wise as mean and standard deviation over
folds (both the sample and population flavors are kept). The k-sweep reuses the
fold splits and their cached pairwise scores so only the clustering and
thresholds are refit per k.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import normalization
from .baselines import fit_minmax, slf_fuse_arrays
from .data import EmbeddingDataset, FoldSplit, load_dataset, make_subject_disjoint_folds
from .errors import DataError, FairnormError, NumericError
from .metrics import EvalReport, evaluate
from .normalization import FairNormModel
from .pairs import PairScores, score_all_pairs
from .thresholds import threshold_at_fmr

METHODS = ("fair", "global", "slf")
THRESHOLD_SOURCES = ("test", "train")

DEFAULT_SWEEP_GRID = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a full cross-validated run needs."""

    dataset_paths: tuple[str, ...] = ()
    method: str = "fair"
    k: int = 100
    fit_fmr: float = 1e-3
    fmr_targets: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    n_folds: int = 5
    seed: int = 0
    threshold_source: str = "test"
    min_impostor_count: int | None = None
    max_iters: int = 300
    tol: float = 1e-4
    workers: int = 1
    dataset_format: str = "csv"
    cache_dir: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise NumericError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.threshold_source not in THRESHOLD_SOURCES:
            raise NumericError(
                f"unknown threshold_source {self.threshold_source!r}, "
                f"expected one of {THRESHOLD_SOURCES}"
            )
        if not self.fmr_targets:
            raise NumericError("at least one fmr_target is required")


@dataclass(frozen=True)
class CellStats:
    """Mean and spread of one report cell across folds."""

    values: tuple[float, ...]
    mean: float
    std_sample: float | None
    std_pop: float

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "CellStats":
        arr = np.asarray(values, dtype=np.float64)
        return cls(
            values=tuple(float(v) for v in arr),
            mean=float(arr.mean()),
            std_sample=float(arr.std(ddof=1)) if arr.size > 1 else None,
            std_pop=float(arr.std()),
        )


@dataclass
class AggregatedReport:
    """Fold-aggregated evaluation: one CellStats per report cell."""

    method: str
    k: int
    seed: int
    n_folds: int
    threshold_source: str
    fit_fmr: float
    fmr_targets: tuple[float, ...]
    overall_fnmr: dict[float, CellStats]
    bias_std: dict[tuple[str, float], CellStats]
    per_class_fnmr: dict[tuple[str, str, float], CellStats]
    thresholds: dict[float, CellStats]
    fold_reports: tuple[EvalReport, ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        attrs = sorted({a for a, _ in self.bias_std})
        return {
            "method": self.method,
            "k": self.k,
            "seed": self.seed,
            "n_folds": self.n_folds,
            "threshold_source": self.threshold_source,
            "fit_fmr": self.fit_fmr,
            "fmr_targets": list(self.fmr_targets),
            "overall_fnmr": {
                str(f): _cell_dict(self.overall_fnmr[f]) for f in self.fmr_targets
            },
            "thresholds": {
                str(f): _cell_dict(self.thresholds[f]) for f in self.fmr_targets
            },
            "bias_std": {
                attr: {
                    str(f): _cell_dict(self.bias_std[(attr, f)])
                    for f in self.fmr_targets
                    if (attr, f) in self.bias_std
                }
                for attr in attrs
            },
            "per_class_fnmr": {
                attr: {
                    cls: {
                        str(f): _cell_dict(self.per_class_fnmr[(attr, cls, f)])
                        for f in self.fmr_targets
                        if (attr, cls, f) in self.per_class_fnmr
                    }
                    for cls in sorted(
                        {c for a, c, _ in self.per_class_fnmr if a == attr}
                    )
                }
                for attr in sorted({a for a, _, _ in self.per_class_fnmr})
            },
        }


def _cell_dict(cell: CellStats) -> dict:
    return {
        "mean": cell.mean,
        "std": cell.std_sample,
        "std_pop": cell.std_pop,
        "per_fold": list(cell.values),
    }


def format_aggregate_table(report: AggregatedReport) -> str:
    lines = [
        f"method={report.method} k={report.k} folds={report.n_folds} "
        f"seed={report.seed} fit_fmr={report.fit_fmr:g} "
        f"threshold_source={report.threshold_source}"
    ]
    head = f"{'':24s}" + "".join(f"{f'FNMR@{f:g}':>20s}" for f in report.fmr_targets)
    lines.append(head)

    def fmt(cell: CellStats) -> str:
        spread = cell.std_sample if cell.std_sample is not None else 0.0
        return f"{cell.mean:.4f} ± {spread:.4f}"

    lines.append(
        f"{'overall':24s}"
        + "".join(f"{fmt(report.overall_fnmr[f]):>20s}" for f in report.fmr_targets)
    )
    attrs = sorted({a for a, _, _ in report.per_class_fnmr})
    for attr in attrs:
        lines.append("")
        lines.append(f"attribute: {attr}")
        classes = sorted({c for a, c, _ in report.per_class_fnmr if a == attr})
        for cls in classes:
            cells = []
            for f in report.fmr_targets:
                cell = report.per_class_fnmr.get((attr, cls, f))
                cells.append(f"{fmt(cell):>20s}" if cell else f"{'n/a':>20s}")
            lines.append(f"  {cls:22s}" + "".join(cells))
        cells = []
        for f in report.fmr_targets:
            cell = report.bias_std.get((attr, f))
            cells.append(f"{fmt(cell):>20s}" if cell else f"{'n/a':>20s}")
        lines.append(f"  {'bias (STD)':22s}" + "".join(cells))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Pairwise-score cache
# ---------------------------------------------------------------------------


class ScoreCache:
    """Keeps per-fold pairwise scores in memory, optionally spilled to disk.

    The k-sweep refits clustering per k but never rescoring the O(n^2) pairs.
    Disk entries are npz files named by the cache key.
    """

    def __init__(self, cache_dir: str | Path | None = None):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, PairScores] = {}

    def get(self, key: str, builder) -> PairScores:
        if key in self._memory:
            return self._memory[key]
        if self.cache_dir is not None:
            path = self.cache_dir / f"{key}.npz"
            if path.exists():
                with np.load(path) as data:
                    pairs = PairScores(
                        i=data["i"], j=data["j"], raw=data["raw"], genuine=data["genuine"]
                    )
                self._memory[key] = pairs
                return pairs
        pairs = builder()
        self._memory[key] = pairs
        if self.cache_dir is not None:
            np.savez(
                self.cache_dir / f"{key}.npz",
                i=pairs.i,
                j=pairs.j,
                raw=pairs.raw,
                genuine=pairs.genuine,
            )
        return pairs


# ---------------------------------------------------------------------------
# Fold machinery
# ---------------------------------------------------------------------------


def _cache_prefix(config: ExperimentConfig, datasets: Sequence[EmbeddingDataset]) -> str:
    """Disambiguates cache entries when one cache_dir serves several runs."""
    digest = hashlib.sha1()
    digest.update(f"{config.seed}:{config.n_folds}".encode())
    for ds in datasets:
        digest.update(f":{ds.dim}:{len(ds)}".encode())
        for s in ds.samples:
            digest.update(s.sample_id.encode())
            digest.update(b"\x00")
    return digest.hexdigest()[:12]


def _load_datasets(config: ExperimentConfig) -> tuple[EmbeddingDataset, ...]:
    if not config.dataset_paths:
        raise DataError("no dataset paths configured")
    return tuple(
        load_dataset(p, format=config.dataset_format) for p in config.dataset_paths
    )


def _check_slf_inputs(datasets: Sequence[EmbeddingDataset]) -> tuple[EmbeddingDataset, ...]:
    if len(datasets) != 2:
        raise NumericError("slf needs exactly 2 dataset paths (one per embedding system)")
    a, b = datasets
    if set(a.sample_index) != set(b.sample_index):
        raise DataError("slf datasets must describe the same sample_id set")
    # reorder the second system to the first system's sample order
    order = [b.sample_index[s.sample_id] for s in a.samples]
    b = EmbeddingDataset(dim=b.dim, samples=tuple(b.samples[i] for i in order))
    for sa, sb in zip(a.samples, b.samples):
        if sa.subject_id != sb.subject_id:
            raise DataError(
                f"sample {sa.sample_id!r} has different subjects in the two systems"
            )
    return a, b


def _split(dataset: EmbeddingDataset, fold: FoldSplit):
    return (
        dataset.subset_by_subjects(fold.train_subject_ids),
        dataset.subset_by_subjects(fold.test_subject_ids),
    )


def _train_override(train_scores: PairScores, field_name: str, targets) -> dict[float, float]:
    scores = train_scores.scores(field_name)
    impostors = scores[~train_scores.genuine]
    return {f: threshold_at_fmr(impostors, f) for f in targets}


def _eval_fair(config, key, fold, dataset, cache) -> EvalReport:
    train_ds, test_ds = _split(dataset, fold)
    train_pairs = cache.get(
        f"{key}_train_sys0", lambda: score_all_pairs(train_ds, workers=config.workers)
    )
    model = normalization.fit(
        train_ds,
        k=config.k,
        fmr_target=config.fit_fmr,
        seed=config.seed,
        max_iters=config.max_iters,
        tol=config.tol,
        min_impostor_count=config.min_impostor_count,
        train_pairs=train_pairs,
    )
    test_pairs = cache.get(
        f"{key}_test_sys0", lambda: score_all_pairs(test_ds, workers=config.workers)
    )
    test_pairs = normalization.normalize_pair_scores(model, test_pairs, test_ds)
    override = None
    if config.threshold_source == "train":
        train_norm = normalization.normalize_pair_scores(model, train_pairs, train_ds)
        override = _train_override(train_norm, "normalized", config.fmr_targets)
    return evaluate(
        test_pairs, test_ds, config.fmr_targets, "normalized", thresholds_override=override
    )


def _eval_global(config, key, fold, dataset, cache) -> EvalReport:
    train_ds, test_ds = _split(dataset, fold)
    test_pairs = cache.get(
        f"{key}_test_sys0", lambda: score_all_pairs(test_ds, workers=config.workers)
    )
    override = None
    if config.threshold_source == "train":
        train_pairs = cache.get(
            f"{key}_train_sys0", lambda: score_all_pairs(train_ds, workers=config.workers)
        )
        override = _train_override(train_pairs, "raw", config.fmr_targets)
    return evaluate(
        test_pairs, test_ds, config.fmr_targets, "raw", thresholds_override=override
    )


def _eval_slf(config, key, fold, datasets, cache) -> EvalReport:
    per_split: dict[str, PairScores] = {}
    stats = None
    for split_name in ("train", "test"):
        per_system = []
        for sys_idx, ds in enumerate(datasets):
            sub = _split(ds, fold)[0 if split_name == "train" else 1]
            pairs = cache.get(
                f"{key}_{split_name}_sys{sys_idx}",
                lambda sub=sub: score_all_pairs(sub, workers=config.workers),
            )
            per_system.append(pairs)
        if stats is None:  # min-max ranges come from the training fold only
            stats = [fit_minmax(p.raw) for p in per_system]
        fused = slf_fuse_arrays([p.raw for p in per_system], stats)
        per_split[split_name] = PairScores(
            i=per_system[0].i,
            j=per_system[0].j,
            raw=fused,
            genuine=per_system[0].genuine,
        )
    test_ds = _split(datasets[0], fold)[1]
    override = None
    if config.threshold_source == "train":
        override = _train_override(per_split["train"], "raw", config.fmr_targets)
    return evaluate(
        per_split["test"], test_ds, config.fmr_targets, "raw", thresholds_override=override
    )


def _aggregate(config: ExperimentConfig, reports: Sequence[EvalReport]) -> AggregatedReport:
    targets = config.fmr_targets
    overall = {
        f: CellStats.from_values([r.overall_fnmr[f] for r in reports]) for f in targets
    }
    thresholds = {
        f: CellStats.from_values([r.thresholds[f] for r in reports]) for f in targets
    }
    bias_keys = sorted({k for r in reports for k in r.bias_std})
    bias = {
        key: CellStats.from_values([r.bias_std[key] for r in reports if key in r.bias_std])
        for key in bias_keys
    }
    class_keys = sorted({k for r in reports for k in r.per_class_fnmr})
    per_class = {
        key: CellStats.from_values(
            [r.per_class_fnmr[key] for r in reports if key in r.per_class_fnmr]
        )
        for key in class_keys
    }
    return AggregatedReport(
        method=config.method,
        k=config.k,
        seed=config.seed,
        n_folds=config.n_folds,
        threshold_source=config.threshold_source,
        fit_fmr=config.fit_fmr,
        fmr_targets=targets,
        overall_fnmr=overall,
        bias_std=bias,
        per_class_fnmr=per_class,
        thresholds=thresholds,
        fold_reports=tuple(reports),
    )


def run_experiment(
    config: ExperimentConfig,
    datasets: Sequence[EmbeddingDataset] | None = None,
    cache: ScoreCache | None = None,
) -> AggregatedReport:
    """Subject-disjoint cross-validation of one method; deterministic per seed."""
    loaded = tuple(datasets) if datasets is not None else _load_datasets(config)
    if config.method == "slf":
        loaded = _check_slf_inputs(loaded)
    elif len(loaded) != 1:
        raise NumericError(f"method {config.method!r} expects exactly 1 dataset")
    primary = loaded[0]
    folds = make_subject_disjoint_folds(primary, config.n_folds, config.seed)
    cache = cache if cache is not None else ScoreCache(config.cache_dir)
    prefix = _cache_prefix(config, loaded)
    reports = []
    for fold_idx, fold in enumerate(folds):
        key = f"{prefix}_fold{fold_idx}"
        try:
            if config.method == "fair":
                reports.append(_eval_fair(config, key, fold, primary, cache))
            elif config.method == "global":
                reports.append(_eval_global(config, key, fold, primary, cache))
            else:
                reports.append(_eval_slf(config, key, fold, loaded, cache))
        except FairnormError as exc:
            raise type(exc)(f"fold {fold_idx}: {exc}") from exc
    return _aggregate(config, reports)


# ---------------------------------------------------------------------------
# Individuality-parameter sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepEntry:
    k: int
    fnmr: CellStats


@dataclass
class SweepResult:
    """Mean and spread of the overall FNMR across folds, one entry per k."""

    fmr_target: float
    entries: tuple[SweepEntry, ...]

    def __post_init__(self):
        ks = [e.k for e in self.entries]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise NumericError("sweep entries must be strictly increasing in k")

    def ks(self) -> list[int]:
        return [e.k for e in self.entries]

    def mean_fnmr(self, k: int) -> float:
        for e in self.entries:
            if e.k == k:
                return e.fnmr.mean
        raise KeyError(k)

    def to_csv(self, out) -> None:
        out.write("k,mean_fnmr,std_fnmr,std_fnmr_pop\n")
        for e in self.entries:
            std = "" if e.fnmr.std_sample is None else repr(e.fnmr.std_sample)
            out.write(f"{e.k},{e.fnmr.mean!r},{std},{e.fnmr.std_pop!r}\n")

    def to_dict(self) -> dict:
        return {
            "fmr_target": self.fmr_target,
            "entries": [
                {"k": e.k, "fnmr": _cell_dict(e.fnmr)} for e in self.entries
            ],
        }


def default_sweep_grid(train_size: int) -> list[int]:
    """The log-spaced default grid, clipped to the training-set size."""
    return [k for k in DEFAULT_SWEEP_GRID if k <= train_size]


def sweep_k(
    config: ExperimentConfig,
    ks: Iterable[int],
    datasets: Sequence[EmbeddingDataset] | None = None,
) -> SweepResult:
    """Run the fair method once per k, reusing fold splits and cached scores.

    The reported FNMR is at the first configured fmr_target.
    """
    ks = sorted(set(int(k) for k in ks))
    if not ks:
        raise NumericError("no k values to sweep")
    loaded = tuple(datasets) if datasets is not None else _load_datasets(config)
    if len(loaded) != 1:
        raise NumericError("sweep_k runs on exactly 1 dataset")
    primary = loaded[0]
    folds = make_subject_disjoint_folds(primary, config.n_folds, config.seed)
    min_train = min(
        sum(1 for s in primary.samples if s.subject_id in fold.train_subject_ids)
        for fold in folds
    )
    for k in ks:
        if k < 1 or k > min_train:
            raise NumericError(
                f"sweep k={k} outside [1, {min_train}] supported by the fold train splits"
            )
    cache = ScoreCache(config.cache_dir)
    target = config.fmr_targets[0]
    entries = []
    for k in ks:
        k_config = replace(config, method="fair", k=k, fmr_targets=(target,))
        report = run_experiment(k_config, datasets=(primary,), cache=cache)
        entries.append(SweepEntry(k=k, fnmr=report.overall_fnmr[target]))
    return SweepResult(fmr_target=target, entries=tuple(entries))


# ---------------------------------------------------------------------------
# Threshold export (per-sample local operating points)
# ---------------------------------------------------------------------------


def export_thresholds(
    model: FairNormModel, dataset: EmbeddingDataset
) -> list[tuple[str, int, float]]:
    """(sample_id, cluster_id, local_threshold) for every sample, dataset order."""
    from .clustering import assign_many

    cluster_ids = assign_many(model.cluster_model, dataset.matrix)
    local = model.thresholds.local
    return [
        (s.sample_id, int(c), float(local[c]))
        for s, c in zip(dataset.samples, cluster_ids)
    ]


def write_thresholds_csv(model: FairNormModel, dataset: EmbeddingDataset, out) -> None:
    out.write("sample_id,cluster_id,local_threshold\n")
    for sample_id, cluster_id, thr in export_thresholds(model, dataset):
        out.write(f"{sample_id},{cluster_id},{thr!r}\n")
