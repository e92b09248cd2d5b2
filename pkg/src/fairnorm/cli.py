"""Command-line interface.

Subcommands: synth, train, normalize, evaluate, baseline, sweep-k,
export-thresholds, run. Reports go to stdout as aligned text tables, or as
JSON with --json. Exit codes: 0 success, 1 usage error, 2 data error,
3 numeric/degenerate error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import normalization
from .data import load_dataset, make_subject_disjoint_folds, save_dataset
from .errors import DataError, NumericError
from .experiment import (
    ExperimentConfig,
    default_sweep_grid,
    format_aggregate_table,
    run_experiment,
    sweep_k,
    write_thresholds_csv,
)
from .metrics import evaluate, format_table
from .pairs import dump_scores, score_all_pairs
from .synth import SynthConfig, generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit(message))

    def _usage_exit(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairnorm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--format", choices=("csv", "binary"), default="csv",
                        help="dataset file format (default csv)")
    common.add_argument("--json", action="store_true", help="emit reports as JSON")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic biased population")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--subjects-per-group", type=int, default=100)
    p.add_argument("--samples-per-subject", type=int, default=4)
    p.add_argument("--intra-noise", type=_float_list, default=(0.1, 0.3),
                   help="comma-separated per-group noise scales (default 0.1,0.3)")
    p.add_argument("--group-dispersion", type=float, default=0.3)

    fit = argparse.ArgumentParser(add_help=False)
    fit.add_argument("--k", type=int, default=100, help="number of clusters (default 100)")
    fit.add_argument("--fmr", type=float, default=1e-3,
                     help="FMR target the thresholds are fit at (default 1e-3)")
    fit.add_argument("--min-impostors", type=int, default=None,
                     help="impostor count below which a cluster falls back to the "
                          "global threshold (default ceil(1/fmr))")
    fit.add_argument("--max-iters", type=int, default=300)
    fit.add_argument("--tol", type=float, default=1e-4)
    fit.add_argument("--workers", type=int, default=1,
                     help="scoring worker threads; results are worker-count independent")

    p = sub.add_parser("train", parents=[common, fit],
                       help="fit a normalization model on a dataset")
    p.add_argument("--data", required=True, help="training dataset path")
    p.add_argument("--out", required=True, help="output model JSON path")

    p = sub.add_parser("normalize", parents=[common],
                       help="normalize scores for listed sample pairs")
    p.add_argument("--model", required=True, help="fitted model JSON path")
    p.add_argument("--data", required=True, help="dataset holding the referenced samples")
    p.add_argument("--pairs", required=True,
                   help="CSV of sample-id pairs, columns i,j (header optional)")
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")

    p = sub.add_parser("evaluate", parents=[common],
                       help="evaluate raw or normalized scores on one dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default=None,
                   help="model JSON; when given, normalized scores are evaluated")
    p.add_argument("--score-field", choices=("raw", "normalized"), default=None,
                   help="which scores to judge (default: normalized when a model "
                        "is given, raw otherwise)")
    p.add_argument("--fmr-targets", type=_float_list, default=(1e-3, 1e-4, 1e-5),
                   help="comma-separated FMR targets (default 1e-3,1e-4,1e-5)")
    p.add_argument("--dump-scores", default=None, metavar="PATH",
                   help="write the debugging CSV i,j,raw_score,genuine")
    p.add_argument("--workers", type=int, default=1)

    cv = argparse.ArgumentParser(add_help=False)
    cv.add_argument("--folds", type=int, default=5, help="cross-validation folds (default 5)")
    cv.add_argument("--threshold-source", choices=("test", "train"), default="test",
                    help="where evaluation thresholds are anchored (default test)")
    cv.add_argument("--fmr-targets", type=_float_list, default=(1e-3, 1e-4, 1e-5))
    cv.add_argument("--cache-dir", default=None,
                    help="directory for cached pairwise scores")

    p = sub.add_parser("run", parents=[common, fit, cv],
                       help="full subject-disjoint cross-validated experiment")
    p.add_argument("--data", required=True, nargs="+",
                   help="dataset path (two paths for method slf)")
    p.add_argument("--method", choices=("fair", "global", "slf"), default="fair")

    p = sub.add_parser("baseline", parents=[common, fit, cv],
                       help="cross-validated baseline systems")
    p.add_argument("--data", required=True, nargs="+",
                   help="dataset path (two paths for method slf)")
    p.add_argument("--method", choices=("global", "slf"), required=True)

    p = sub.add_parser("sweep-k", parents=[common, fit, cv],
                       help="sweep the individuality parameter k")
    p.add_argument("--data", required=True)
    p.add_argument("--ks", type=_int_list, default=None,
                   help="comma-separated k grid (default log-spaced, clipped to "
                        "the training size)")
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")

    p = sub.add_parser("export-thresholds", parents=[common],
                       help="per-sample cluster id and local threshold as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")

    return parser


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    config = SynthConfig(
        dim=args.dim,
        n_groups=args.groups,
        subjects_per_group=args.subjects_per_group,
        samples_per_subject=args.samples_per_subject,
        intra_noise=tuple(args.intra_noise),
        group_dispersion=args.group_dispersion,
        seed=args.seed,
    )
    dataset = generate(config)
    save_dataset(dataset, args.out, format=args.format)
    print(f"wrote {len(dataset)} samples ({len(dataset.subject_ids)} subjects) to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data, format=args.format)
    model = normalization.fit(
        dataset,
        k=args.k,
        fmr_target=args.fmr,
        seed=args.seed,
        max_iters=args.max_iters,
        tol=args.tol,
        min_impostor_count=args.min_impostors,
        workers=args.workers,
    )
    normalization.save_model(model, args.out)
    n_fallback = int(model.thresholds.fallback.sum())
    print(
        f"fitted k={model.k} model (global threshold {model.global_thr:.6f}, "
        f"{n_fallback} fallback clusters) -> {args.out}"
    )
    return EXIT_OK


def _read_pair_ids(path: str) -> list[tuple[str, str]]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row_no, row in enumerate(csv.reader(
                line for line in f if not line.lstrip().startswith("#")), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"pairs file row {row_no}: expected 2 columns, got {len(row)}")
            if row_no == 1 and [c.strip().lower() for c in row] == ["i", "j"]:
                continue
            out.append((row[0], row[1]))
    if not out:
        raise DataError("pairs file lists no pairs")
    return out


def _cmd_normalize(args) -> int:
    model = normalization.load_model(args.model)
    dataset = load_dataset(args.data, format=args.format)
    pair_ids = _read_pair_ids(args.pairs)
    out, close = _open_out(args.out)
    try:
        out.write("i,j,raw,normalized,decision\n")
        for left, right in pair_ids:
            for sid in (left, right):
                if sid not in dataset.sample_index:
                    raise DataError(f"sample id {sid!r} not present in {args.data}")
            vi = dataset.samples[dataset.sample_index[left]].vector
            vj = dataset.samples[dataset.sample_index[right]].vector
            raw, norm = normalization.compare(model, vi, vj)
            decision = "match" if norm >= model.global_thr else "non-match"
            out.write(f"{left},{right},{raw!r},{norm!r},{decision}\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    dataset = load_dataset(args.data, format=args.format)
    pairs = score_all_pairs(dataset, workers=args.workers)
    score_field = args.score_field
    if args.model is not None:
        model = normalization.load_model(args.model)
        pairs = normalization.normalize_pair_scores(model, pairs, dataset)
        score_field = score_field or "normalized"
    elif score_field == "normalized":
        raise NumericError("--score-field normalized requires --model")
    score_field = score_field or "raw"
    if args.dump_scores:
        with open(args.dump_scores, "w", encoding="utf-8", newline="") as f:
            dump_scores(pairs, f)
    report = evaluate(pairs, dataset, args.fmr_targets, score_field)
    if args.json:
        print(json.dumps(report.to_dict(), indent=1))
    else:
        print(format_table(report))
    return EXIT_OK


def _experiment_config(args, method: str, paths: tuple[str, ...]) -> ExperimentConfig:
    return ExperimentConfig(
        dataset_paths=paths,
        method=method,
        k=args.k,
        fit_fmr=args.fmr,
        fmr_targets=tuple(args.fmr_targets),
        n_folds=args.folds,
        seed=args.seed,
        threshold_source=args.threshold_source,
        min_impostor_count=args.min_impostors,
        max_iters=args.max_iters,
        tol=args.tol,
        workers=args.workers,
        dataset_format=args.format,
        cache_dir=args.cache_dir,
    )


def _cmd_run(args) -> int:
    report = run_experiment(_experiment_config(args, args.method, tuple(args.data)))
    if args.json:
        print(json.dumps(report.to_dict(), indent=1))
    else:
        print(format_aggregate_table(report))
    return EXIT_OK


def _cmd_sweep_k(args) -> int:
    config = _experiment_config(args, "fair", (args.data,))
    dataset = load_dataset(args.data, format=args.format)
    ks = args.ks
    if ks is None:
        folds = make_subject_disjoint_folds(dataset, config.n_folds, config.seed)
        min_train = min(
            sum(1 for s in dataset.samples if s.subject_id in fold.train_subject_ids)
            for fold in folds
        )
        ks = default_sweep_grid(min_train)
    result = sweep_k(config, ks, datasets=(dataset,))
    if args.json:
        print(json.dumps(result.to_dict(), indent=1))
        return EXIT_OK
    out, close = _open_out(args.out)
    try:
        result.to_csv(out)
    finally:
        if close:
            out.close()
    return EXIT_OK


def _cmd_export_thresholds(args) -> int:
    model = normalization.load_model(args.model)
    dataset = load_dataset(args.data, format=args.format)
    out, close = _open_out(args.out)
    try:
        write_thresholds_csv(model, dataset, out)
    finally:
        if close:
            out.close()
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "normalize": _cmd_normalize,
    "evaluate": _cmd_evaluate,
    "run": _cmd_run,
    "baseline": _cmd_run,
    "sweep-k": _cmd_sweep_k,
    "export-thresholds": _cmd_export_thresholds,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # run/baseline: dataset-count sanity before any file I/O
    if args.command in ("run", "baseline"):
        expected = 2 if args.method == "slf" else 1
        if len(args.data) != expected:
            print(
                f"fairnorm {args.command}: method {args.method!r} takes exactly "
                f"{expected} dataset path(s), got {len(args.data)}",
                file=sys.stderr,
            )
            return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"fairnorm {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"fairnorm {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"fairnorm {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
