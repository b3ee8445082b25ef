"""Command-line front end: ``fallbench generate | describe | benchmark | roc | compare``.

Exit codes: 0 success, 1 runtime or statistical error, 2 configuration or
parse error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .benchmark import (
    Comparison,
    ConfigError,
    config_from_dict,
    default_config_data,
    load_benchmark_cohort,
    load_config,
    resolve_seed,
    run_benchmark,
    write_outputs,
)
from .cohort import CohortError, cohort_to_csv, read_cohort
from .evaluation import EvaluationError, METRICS, roc, roc_bands, roc_to_csv
from .pipeline import PipelineError
from .stats import StatisticsError, chi_squared_2x2, six_number_summary, welch_t_test
from .synth import SpecError, default_cohort_spec, generate_cohort, load_spec

log = logging.getLogger("fallbench")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
DEFAULT_CONFIG = "default"


class UsageError(Exception):
    pass


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _config(path: str):
    if path == DEFAULT_CONFIG:
        return config_from_dict(default_config_data())
    return load_config(path)


def _checked_cohort(config):
    cohort = load_benchmark_cohort(config)
    for s in config.strategies:
        missing = [v for v in s.variable_set.variables if v not in cohort.schema]
        if missing:
            raise ConfigError(f"strategy {s.label!r} needs variables absent from the cohort: {missing}")
    return cohort


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    spec = load_spec(args.spec) if args.spec else default_cohort_spec()
    cohort = generate_cohort(spec, args.seed)
    _write(cohort_to_csv(cohort), args.out)
    return EXIT_OK


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _fmt_p(p: float | None) -> str:
    return "-" if p is None else f"{p:.1e}"


def describe_text(cohort) -> str:
    """Per-class summaries with Welch t (continuous) or chi-squared (binary) p."""
    y = cohort.y
    both = 0 < y.sum() < y.size
    binary_rows = ["Variable\tPopulation\tN\tYes\tNo\tSignificance (chi-squared)"]
    cont_rows = ["Variable\tPopulation\tN\tMin\tQ1\tMedian\tMean\tQ3\tMax\tSignificance (t-test)"]
    for j, name in enumerate(cohort.schema):
        col = cohort.matrix[:, j]
        present = ~np.isnan(col)
        groups = [("Faller", col[present & (y == 1)]), ("Non-Faller", col[present & (y == 0)])]
        values = col[present]
        if values.size and np.all(np.isin(values, (0.0, 1.0))):
            counts = [(int(v.sum()), int(v.size - v.sum())) for _, v in groups]
            p = None
            if both:
                try:
                    p = chi_squared_2x2(*counts[0], *counts[1]).p_value
                except StatisticsError:
                    p = None
            for i, (label, v) in enumerate(groups):
                sig = _fmt_p(p) if i == 0 else ""
                binary_rows.append(f"{name}\t{label}\t{v.size}\t{counts[i][0]}\t{counts[i][1]}\t{sig}")
            continue
        p = None
        if both:
            try:
                res = welch_t_test(groups[0][1], groups[1][1])
                p = None if res.degenerate else res.p_value
            except StatisticsError:
                p = None
        for i, (label, v) in enumerate(groups):
            sig = _fmt_p(p) if i == 0 else ""
            if v.size:
                s = six_number_summary(v)
                cells = "\t".join(_fmt(x) for x in s.as_tuple())
            else:
                cells = "\t".join("-" for _ in range(6))
            cont_rows.append(f"{name}\t{label}\t{v.size}\t{cells}\t{sig}")
    header = f"Patients: {len(cohort)} (fallers {cohort.n_fallers}, non-fallers {len(cohort) - cohort.n_fallers})"
    return "\n".join([header, "", *binary_rows, "", *cont_rows]) + "\n"


def cmd_describe(args) -> int:
    _write(describe_text(read_cohort(args.cohort)), None)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    config = _config(args.config)
    if args.aggregation:
        config = replace(config, aggregation=args.aggregation)
    seed = resolve_seed(args.seed, config)
    cohort = _checked_cohort(config)
    result = run_benchmark(config, cohort, seed=seed, jobs=args.jobs)
    out = args.out or config.output
    write_outputs(result, out)
    sys.stdout.write(result.report_tsv())
    if result.comparisons:
        sys.stdout.write("\n" + result.comparisons_tsv())
    return EXIT_OK


def cmd_roc(args) -> int:
    config = _config(args.config)
    strategy = config.strategy(args.label)
    seed = resolve_seed(args.seed, config)
    cohort = _checked_cohort(config)
    result = run_benchmark(config, cohort, seed=seed, labels=[strategy.label])
    preds = result.results[0].predictions
    if args.bands:
        curve = roc_bands(preds, B=args.bands, alpha=args.alpha, seed=seed)
    else:
        curve = roc(preds)
    _write(roc_to_csv(curve), args.out)
    stream = sys.stdout if args.out not in (None, "-") else sys.stderr
    stream.write(f"AUROC {curve.auroc:.3f}\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _config(args.config)
    for label in (args.a, args.b):
        config.strategy(label)
    seed = resolve_seed(args.seed, config)
    cohort = _checked_cohort(config)
    config = replace(config, comparisons=(Comparison(args.a, args.b, args.metric),))
    result = run_benchmark(config, cohort, seed=seed, labels=[args.a, args.b])
    _, test = result.comparisons[0]
    sys.stdout.write(
        f"{args.a}\t{args.b}\t{args.metric}\tstatistic={test.statistic:.1f}\tn={test.n}\t"
        f"p={test.p_value:.6g}{' (degenerate)' if test.degenerate else ''}\n"
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _bands(text: str) -> int:
    value = text.split("=", 1)[1] if "=" in text else text
    try:
        b = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a count, got {text!r}") from None
    if b < 1:
        raise argparse.ArgumentTypeError("bootstrap count must be positive")
    return b


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fallbench", description="Fall-risk prediction benchmarking.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic cohort CSV")
    p.add_argument("--spec", help="cohort spec JSON (default: built-in published summaries)")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.add_argument("--seed", type=int, help="overrides the spec seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("describe", help="per-class summary tables of a cohort CSV")
    p.add_argument("cohort")
    p.set_defaults(func=cmd_describe)

    def add_config(p):
        p.add_argument("config", help=f"benchmark config JSON, or '{DEFAULT_CONFIG}' for the built-in grid")
        p.add_argument("--seed", type=int, help="master seed (overrides config and environment)")

    p = sub.add_parser("benchmark", help="run a benchmark grid")
    p.add_argument("config", nargs="?", default=DEFAULT_CONFIG,
                   help=f"benchmark config JSON (default: '{DEFAULT_CONFIG}', the built-in grid)")
    p.add_argument("--seed", type=int, help="master seed (overrides config and environment)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--out", help="output directory (default: config 'output')")
    agg = p.add_mutually_exclusive_group()
    agg.add_argument("--pooled-metrics", dest="aggregation", action="store_const", const="pooled",
                     help="metrics from pooled counts over all folds (default)")
    agg.add_argument("--fold-mean-metrics", dest="aggregation", action="store_const", const="fold_mean",
                     help="metrics as the unweighted mean of fold-level values")
    p.set_defaults(func=cmd_benchmark, aggregation=None)

    p = sub.add_parser("roc", help="ROC curve CSV for one strategy")
    add_config(p)
    p.add_argument("label", help="strategy label")
    p.add_argument("--bands", type=_bands, nargs="?", const=1000, default=None,
                   help="add bootstrap FPR bands with B resamples (B=1000 if no value)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("compare", help="paired Wilcoxon test between two strategies")
    add_config(p)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--metric", choices=METRICS, default="mmce")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fallbench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be at least 1")
        return args.func(args)
    except (ConfigError, SpecError, CohortError, FileNotFoundError) as exc:
        print(f"fallbench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PipelineError, EvaluationError, StatisticsError, ValueError) as exc:
        print(f"fallbench: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
