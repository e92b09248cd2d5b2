"""Verification performance and demographic-bias statistics.

For every requested FMR target, one decision threshold is derived from the
evaluated score field's impostor distribution (or taken from a caller-supplied
override, e.g. thresholds carried over from a training fold). FNMR is then
reported overall and per demographic class, where a pair belongs to a class
whenever at least one endpoint carries that label, mirroring the cluster
membership rule. The bias of an attribute is the population standard deviation
of its class-wise FNMRs; lower is fairer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .data import EmbeddingDataset
from .errors import NumericError
from .pairs import PairScores, ScorePair
from .thresholds import fnmr_at_threshold, threshold_at_fmr

# Below this many genuine pairs a class FNMR is flagged (not dropped).
LOW_RELIABILITY_GENUINE_PAIRS = 20


@dataclass
class EvalReport:
    """Per-target FNMR, per-class FNMR, bias STD, and the raw counts behind them."""

    score_field: str
    fmr_targets: tuple[float, ...]
    thresholds: dict[float, float]
    overall_fnmr: dict[float, float]
    per_class_fnmr: dict[tuple[str, str, float], float]
    bias_std: dict[tuple[str, float], float]
    n_genuine: int
    n_impostor: int
    false_nonmatch: dict[float, int]
    class_pair_counts: dict[tuple[str, str], tuple[int, int]]
    class_false_nonmatch: dict[tuple[str, str, float], int]
    low_reliability: dict[tuple[str, str], bool] = field(default_factory=dict)

    def attributes(self) -> list[str]:
        return sorted({attr for attr, _ in self.class_pair_counts})

    def classes_of(self, attr: str) -> list[str]:
        return sorted({cls for a, cls in self.class_pair_counts if a == attr})

    def to_dict(self) -> dict:
        """JSON-ready nested representation."""
        attrs: dict = {}
        for (attr, cls), (n_gen, n_imp) in sorted(self.class_pair_counts.items()):
            entry = attrs.setdefault(attr, {}).setdefault(cls, {})
            entry["genuine_pairs"] = n_gen
            entry["impostor_pairs"] = n_imp
            entry["low_reliability"] = self.low_reliability.get((attr, cls), False)
            entry["fnmr"] = {
                str(f): self.per_class_fnmr[(attr, cls, f)]
                for f in self.fmr_targets
                if (attr, cls, f) in self.per_class_fnmr
            }
        return {
            "score_field": self.score_field,
            "fmr_targets": list(self.fmr_targets),
            "thresholds": {str(f): self.thresholds[f] for f in self.fmr_targets},
            "overall": {
                str(f): {
                    "fnmr": self.overall_fnmr[f],
                    "false_nonmatch": self.false_nonmatch[f],
                }
                for f in self.fmr_targets
            },
            "counts": {"genuine": self.n_genuine, "impostor": self.n_impostor},
            "attributes": attrs,
            "bias_std": {
                attr: {
                    str(f): self.bias_std[(attr, f)]
                    for f in self.fmr_targets
                    if (attr, f) in self.bias_std
                }
                for attr in self.attributes()
            },
        }


def _class_masks(
    dataset: EmbeddingDataset, pairs: PairScores
) -> dict[str, dict[str, np.ndarray]]:
    """Pair membership per (attribute, class): at least one endpoint labeled."""
    masks: dict[str, dict[str, np.ndarray]] = {}
    for attr in dataset.attribute_names:
        values = np.array(
            [s.attributes.get(attr, "") for s in dataset.samples], dtype=object
        )
        classes = sorted({v for v in values if v})
        per_class = {}
        for cls in classes:
            labeled = values == cls
            per_class[cls] = labeled[pairs.i] | labeled[pairs.j]
        if per_class:
            masks[attr] = per_class
    return masks


def evaluate(
    pairs: PairScores | Iterable[ScorePair],
    dataset: EmbeddingDataset,
    fmr_targets: Iterable[float],
    score_field: str = "raw",
    thresholds_override: Mapping[float, float] | None = None,
) -> EvalReport:
    """Score a pair set against FMR-anchored thresholds.

    Thresholds come from the evaluated scores' own impostor distribution unless
    `thresholds_override` supplies one per target (the train-anchored mode).
    """
    ps = pairs if isinstance(pairs, PairScores) else PairScores.from_pairs(pairs)
    targets = tuple(fmr_targets)
    if not targets:
        raise NumericError("at least one fmr_target is required")
    if len(ps) == 0:
        raise NumericError("cannot evaluate an empty pair set")
    scores = ps.scores(score_field)
    genuine_scores = scores[ps.genuine]
    impostor_scores = scores[~ps.genuine]
    if genuine_scores.size == 0:
        raise NumericError("no genuine pairs to evaluate")
    if impostor_scores.size == 0:
        raise NumericError("no impostor pairs to evaluate")

    thresholds: dict[float, float] = {}
    for f in targets:
        if thresholds_override is not None:
            if f not in thresholds_override:
                raise NumericError(f"thresholds_override is missing target {f}")
            thresholds[f] = float(thresholds_override[f])
        else:
            thresholds[f] = threshold_at_fmr(impostor_scores, f)

    overall_fnmr = {f: fnmr_at_threshold(genuine_scores, thresholds[f]) for f in targets}
    false_nonmatch = {
        f: int(np.count_nonzero(genuine_scores < thresholds[f])) for f in targets
    }

    per_class_fnmr: dict[tuple[str, str, float], float] = {}
    class_pair_counts: dict[tuple[str, str], tuple[int, int]] = {}
    class_false_nonmatch: dict[tuple[str, str, float], int] = {}
    low_reliability: dict[tuple[str, str], bool] = {}
    bias_std: dict[tuple[str, float], float] = {}
    for attr, per_class in _class_masks(dataset, ps).items():
        class_genuine: dict[str, np.ndarray] = {}
        for cls, member in per_class.items():
            cls_gen = scores[member & ps.genuine]
            n_gen = int(cls_gen.size)
            n_imp = int(np.count_nonzero(member & ~ps.genuine))
            class_pair_counts[(attr, cls)] = (n_gen, n_imp)
            low_reliability[(attr, cls)] = n_gen < LOW_RELIABILITY_GENUINE_PAIRS
            if n_gen > 0:
                class_genuine[cls] = cls_gen
        for f in targets:
            class_fnmrs = []
            for cls, cls_gen in class_genuine.items():
                fnmr = fnmr_at_threshold(cls_gen, thresholds[f])
                per_class_fnmr[(attr, cls, f)] = fnmr
                class_false_nonmatch[(attr, cls, f)] = int(
                    np.count_nonzero(cls_gen < thresholds[f])
                )
                class_fnmrs.append(fnmr)
            if class_fnmrs:
                bias_std[(attr, f)] = float(np.std(np.asarray(class_fnmrs)))

    return EvalReport(
        score_field=score_field,
        fmr_targets=targets,
        thresholds=thresholds,
        overall_fnmr=overall_fnmr,
        per_class_fnmr=per_class_fnmr,
        bias_std=bias_std,
        n_genuine=int(genuine_scores.size),
        n_impostor=int(impostor_scores.size),
        false_nonmatch=false_nonmatch,
        class_pair_counts=class_pair_counts,
        class_false_nonmatch=class_false_nonmatch,
        low_reliability=low_reliability,
    )


def bias_reduction(baseline_std: float, treated_std: float) -> float:
    """Percentage drop of the bias STD relative to the baseline; positive is better."""
    if baseline_std <= 0.0:
        raise NumericError("bias reduction is undefined for a zero baseline STD")
    return 100.0 * (baseline_std - treated_std) / baseline_std


def performance_change(baseline_fnmr: float, treated_fnmr: float) -> float:
    """Percentage drop of FNMR relative to the baseline; positive is an improvement."""
    if baseline_fnmr <= 0.0:
        raise NumericError("performance change is undefined for a zero baseline FNMR")
    return 100.0 * (baseline_fnmr - treated_fnmr) / baseline_fnmr


def format_table(report: EvalReport) -> str:
    """Aligned-column text rendering: overall rows, then per-attribute blocks."""
    lines = []
    target_heads = [f"FNMR@{f:g}" for f in report.fmr_targets]
    lines.append(f"score field: {report.score_field}")
    lines.append(
        f"pairs: {report.n_genuine} genuine / {report.n_impostor} impostor"
    )
    head = f"{'':24s}" + "".join(f"{h:>14s}" for h in target_heads)
    lines.append(head)
    row = f"{'overall':24s}" + "".join(
        f"{report.overall_fnmr[f]:>14.4f}" for f in report.fmr_targets
    )
    lines.append(row)
    for attr in report.attributes():
        lines.append("")
        lines.append(f"attribute: {attr}")
        for cls in report.classes_of(attr):
            cells = []
            for f in report.fmr_targets:
                v = report.per_class_fnmr.get((attr, cls, f))
                cells.append(f"{v:>14.4f}" if v is not None else f"{'n/a':>14s}")
            flag = " *" if report.low_reliability.get((attr, cls)) else ""
            lines.append(f"  {cls:22s}" + "".join(cells) + flag)
        cells = []
        for f in report.fmr_targets:
            v = report.bias_std.get((attr, f))
            cells.append(f"{v:>14.4f}" if v is not None else f"{'n/a':>14s}")
        lines.append(f"  {'bias (STD)':22s}" + "".join(cells))
    flagged = [f"{a}/{c}" for (a, c), low in sorted(report.low_reliability.items()) if low]
    if flagged:
        lines.append("")
        lines.append(f"* fewer than {LOW_RELIABILITY_GENUINE_PAIRS} genuine pairs: "
                     + ", ".join(flagged))
    return "\n".join(lines)
