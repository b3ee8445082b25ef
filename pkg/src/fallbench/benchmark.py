"""Benchmark configuration and the grid runner behind ``fallbench benchmark``."""
from __future__ import annotations

import hashlib
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .cohort import Cohort, VariableSet, build_variable_sets, read_cohort
from .evaluation import (
    AGGREGATIONS,
    METRICS,
    MetricReport,
    compare_strategies,
    emit_report,
    metrics_with_se,
    tune_threshold,
)
from .learners import DISPLAY_NAMES, FAMILIES, ModelSpec
from .pipeline import (
    DEFAULT_GRIDS,
    FALLBACK_MAJORITY,
    FALLBACKS,
    FoldPlan,
    PredictionSet,
    PredictionStrategy,
    evaluation_population,
    make_fold_plan,
    run_strategy,
)
from .stats import TestResult
from .synth import default_cohort_spec, generate_cohort, load_spec

SEED_ENV = "FALLBENCH_SEED"


class ConfigError(ValueError):
    """The benchmark configuration is invalid."""


@dataclass(frozen=True)
class Comparison:
    a: str
    b: str
    metric: str = "mmce"


@dataclass(frozen=True)
class BenchmarkConfig:
    strategies: tuple[PredictionStrategy, ...]
    comparisons: tuple[Comparison, ...] = ()
    cohort: Mapping = field(default_factory=lambda: {"synthetic": True})
    seed: int | None = None
    folds: int = 10
    inner_folds: int = 3
    aggregation: str = "pooled"
    output: str = "benchmark-out"
    base_dir: str = "."

    def strategy(self, label: str) -> PredictionStrategy:
        for s in self.strategies:
            if s.label == label:
                return s
        raise ConfigError(f"no strategy labelled {label!r}")


def default_label(family: str, variable_set: str, fallback: str) -> str:
    name = DISPLAY_NAMES[family]
    if fallback == FALLBACK_MAJORITY:
        name += " + Majority"
    return f"{variable_set} / {name}"


def _strategy_from_dict(item: Mapping, sets: Mapping[str, VariableSet]) -> PredictionStrategy:
    family = item.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"unknown model family {family!r}")
    set_name = item.get("variable_set")
    if set_name not in sets:
        raise ConfigError(f"unknown variable set {set_name!r}")
    fallback = item.get("fallback", "none")
    if fallback not in FALLBACKS:
        raise ConfigError(f"fallback must be one of {FALLBACKS}, got {fallback!r}")
    grid = item.get("grid")
    if grid is None and item.get("tune", False):
        if family not in DEFAULT_GRIDS:
            raise ConfigError(f"{family} has no default tuning grid")
        grid = DEFAULT_GRIDS[family]
    label = item.get("label") or default_label(family, set_name, fallback)
    try:
        spec = ModelSpec(family, dict(item.get("params", {})))
        if grid:
            for name in grid:
                spec.with_params(**{name: grid[name][0]})
        return PredictionStrategy(
            label=label,
            spec=spec,
            variable_set=sets[set_name],
            fallback=fallback,
            threshold=float(item.get("threshold", 0.5)),
            grid=grid,
            threshold_objective=item.get("threshold_objective"),
            threshold_mode=item.get("threshold_mode", "pooled"),
        )
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"strategy {label!r}: {exc}") from None


def config_from_dict(data: Mapping, base_dir: str | os.PathLike = ".") -> BenchmarkConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("configuration must be a JSON object")
    source = data.get("variable_sets")
    if isinstance(source, str) and not Path(source).is_absolute():
        source = str(Path(base_dir) / source)
    try:
        sets = build_variable_sets(source)
    except OSError as exc:
        raise ConfigError(f"cannot read variable sets {source}: {exc.strerror}") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad variable sets: {exc}") from None
    items = data.get("strategies")
    if not isinstance(items, list) or not items:
        raise ConfigError("configuration needs a non-empty 'strategies' list")
    strategies = tuple(_strategy_from_dict(item, sets) for item in items)
    labels = [s.label for s in strategies]
    dupes = sorted({x for x in labels if labels.count(x) > 1})
    if dupes:
        raise ConfigError(f"duplicate strategy labels: {dupes}")

    comparisons = []
    for item in data.get("comparisons", []):
        if isinstance(item, Mapping):
            comp = Comparison(item.get("a"), item.get("b"), item.get("metric", "mmce"))
        elif isinstance(item, Sequence) and len(item) in (2, 3):
            comp = Comparison(*item)
        else:
            raise ConfigError(f"bad comparison entry {item!r}")
        for label in (comp.a, comp.b):
            if label not in labels:
                raise ConfigError(f"comparison refers to unknown strategy {label!r}")
        if comp.metric not in METRICS:
            raise ConfigError(f"unknown comparison metric {comp.metric!r}")
        comparisons.append(comp)

    aggregation = data.get("aggregation", "pooled")
    if aggregation not in AGGREGATIONS:
        raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")
    cohort = data.get("cohort", {"synthetic": True})
    if isinstance(cohort, str):
        cohort = {"path": cohort}
    if not isinstance(cohort, Mapping) or not ("path" in cohort or cohort.get("synthetic")):
        raise ConfigError("cohort must name a CSV 'path' or set 'synthetic': true")
    folds = data.get("folds", 10)
    if not isinstance(folds, int) or folds < 2:
        raise ConfigError("folds must be an integer >= 2")
    seed = data.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return BenchmarkConfig(
        strategies=strategies,
        comparisons=tuple(comparisons),
        cohort=dict(cohort),
        seed=seed,
        folds=folds,
        inner_folds=int(data.get("inner_folds", 3)),
        aggregation=aggregation,
        output=str(data.get("output", "benchmark-out")),
        base_dir=str(base_dir),
    )


def load_config(path) -> BenchmarkConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(data, path.parent)


def default_config_data() -> dict:
    text = resources.files("fallbench.data").joinpath("benchmark_grid.json").read_text()
    return json.loads(text)


def resolve_seed(cli_seed: int | None, config: BenchmarkConfig) -> int:
    """Command line, then config, then the environment, then 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if config.seed is not None:
        return int(config.seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _resolve_path(config: BenchmarkConfig, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else Path(config.base_dir) / p


def load_benchmark_cohort(config: BenchmarkConfig) -> Cohort:
    source = config.cohort
    if "path" in source:
        return read_cohort(_resolve_path(config, source["path"]))
    spec = load_spec(_resolve_path(config, source["spec"])) if source.get("spec") else default_cohort_spec()
    return generate_cohort(spec, source.get("seed"))


# --------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class StrategyResult:
    strategy: PredictionStrategy
    predictions: PredictionSet
    report: MetricReport
    tuned_threshold: float | None = None
    degenerate_threshold: bool = False


@dataclass
class BenchmarkResult:
    seed: int
    results: list[StrategyResult]
    comparisons: list[tuple[Comparison, TestResult]]
    plans: dict[str, FoldPlan]

    def result(self, label: str) -> StrategyResult:
        for r in self.results:
            if r.strategy.label == label:
                return r
        raise KeyError(label)

    def report_tsv(self) -> str:
        return emit_report(
            [(r.strategy.label, r.strategy.population_label, r.report) for r in self.results]
        )

    def comparisons_tsv(self) -> str:
        lines = ["a\tb\tmetric\tstatistic\tn\tp_value"]
        for comp, res in self.comparisons:
            lines.append(
                f"{comp.a}\t{comp.b}\t{comp.metric}\t{res.statistic:.1f}\t{res.n}\t{res.p_value:.6g}"
            )
        return "\n".join(lines) + "\n"

    def audit_log(self) -> str:
        lines = [f"seed={self.seed}"]
        for key, plan in self.plans.items():
            lines.append(f"plan {key}: k={plan.k} n={len(plan.ids)} fold_sizes={plan.fold_sizes()}")
        for r in self.results:
            p = r.predictions
            lines.append(
                f"strategy {r.strategy.label!r} population={r.strategy.population_label!r} "
                f"n={len(p)} fallback_used={int(p.fallback_used.sum())}"
            )
            if r.tuned_threshold is not None:
                lines.append(
                    f"  threshold={r.tuned_threshold!r} (pooled post hoc) objective="
                    f"{json.dumps(dict(r.strategy.threshold_objective), sort_keys=True)}"
                    + (" degenerate" if r.degenerate_threshold else "")
                )
            for rec in p.fold_records:
                lines.append("  " + rec.describe())
        return "\n".join(lines) + "\n"


def _population_key(population: Cohort) -> str:
    return hashlib.sha256("\n".join(population.ids).encode()).hexdigest()[:12]


def evaluate_strategy(
    strategy: PredictionStrategy,
    cohort: Cohort,
    plan: FoldPlan,
    inner_k: int = 3,
    aggregation: str = "pooled",
) -> StrategyResult:
    preds = run_strategy(strategy, cohort, plan, inner_k)
    if strategy.threshold_objective and strategy.threshold_mode == "pooled":
        tuned = tune_threshold(preds, strategy.threshold_objective, aggregation)
        return StrategyResult(
            strategy, preds.relabel(tuned.threshold), tuned.report, tuned.threshold, tuned.degenerate
        )
    return StrategyResult(strategy, preds, metrics_with_se(preds, aggregation))


def _evaluate_task(args):
    return evaluate_strategy(*args)


def plan_for(strategy: PredictionStrategy, cohort: Cohort, k: int, seed: int, cache: dict) -> tuple[str, FoldPlan]:
    population = evaluation_population(cohort, strategy)
    key = _population_key(population)
    if key not in cache:
        cache[key] = make_fold_plan(population, k, seed)
    return key, cache[key]


def check_comparisons(config: BenchmarkConfig, cohort: Cohort) -> None:
    """Compared strategies must share an evaluation population (and so a plan)."""
    for comp in config.comparisons:
        a, b = config.strategy(comp.a), config.strategy(comp.b)
        if evaluation_population(cohort, a).ids != evaluation_population(cohort, b).ids:
            raise ConfigError(
                f"cannot compare {comp.a!r} with {comp.b!r}: they are evaluated on different patients"
            )


def run_benchmark(
    config: BenchmarkConfig,
    cohort: Cohort,
    seed: int = 0,
    jobs: int = 1,
    labels: Sequence[str] | None = None,
) -> BenchmarkResult:
    """Evaluate every strategy (or those in ``labels``) under shared fold plans.

    Strategies on the same evaluation population share one plan. Results do
    not depend on ``jobs``.
    """
    strategies = [s for s in config.strategies if labels is None or s.label in labels]
    check_comparisons(config, cohort)
    plans: dict[str, FoldPlan] = {}
    tasks = []
    for s in strategies:
        _, plan = plan_for(s, cohort, config.folds, seed, plans)
        tasks.append((s, cohort, plan, config.inner_folds, config.aggregation))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_task, tasks))
    else:
        results = [_evaluate_task(t) for t in tasks]
    by_label = {r.strategy.label: r for r in results}
    comparisons = []
    for comp in config.comparisons:
        if comp.a in by_label and comp.b in by_label:
            test = compare_strategies(
                by_label[comp.a].predictions, by_label[comp.b].predictions, comp.metric
            )
            comparisons.append((comp, test))
    return BenchmarkResult(seed, results, comparisons, plans)


def safe_filename(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._+-]+", "_", label).strip("_")


def write_outputs(result: BenchmarkResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str):
        path = out / name
        path.write_text(text)
        written.append(path)

    put("report.tsv", result.report_tsv())
    names = set()
    for r in result.results:
        name = safe_filename(r.strategy.label)
        while name in names:
            name += "_"
        names.add(name)
        put(f"{name}.predictions.csv", r.predictions.to_csv())
    put("comparisons.tsv", result.comparisons_tsv())
    put("audit.log", result.audit_log())
    return written

