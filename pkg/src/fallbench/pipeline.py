"""Validation harness: shared fold plans, training-only preprocessing,
nested grid tuning and out-of-fold prediction for one strategy."""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import zlib
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .cohort import Cohort, VariableSet, format_number, select_complete
from .learners import DISPLAY_NAMES, ModelSpec, make_estimator
from .learners.forest import RandomForest
from .validation import check_fitted, check_matrix, check_threshold

log = logging.getLogger(__name__)

FALLBACK_NONE = "none"
FALLBACK_MAJORITY = "majority"
FALLBACKS = (FALLBACK_NONE, FALLBACK_MAJORITY)

DEFAULT_GRIDS: dict[str, dict[str, list[float]]] = {
    "SvmLinear": {"C": [2.0**e for e in range(-4, 5)]},
    "SvmGauss": {"C": [2.0**e for e in range(-2, 3)], "sigma": [2.0**e for e in range(-2, 3)]},
    "RandomForest": {"ntree": [100, 250, 500, 1000, 2000]},
}
SD_FLOOR = 0.0


class PipelineError(RuntimeError):
    """A fold cannot be trained or evaluated."""


# --------------------------------------------------------------------------
# seeds


def derive_seed(master: int, *parts) -> int:
    """Stable 32-bit seed from a master seed and labels (ints or strings)."""
    words = [int(master) & 0xFFFFFFFF]
    for p in parts:
        words.append(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# --------------------------------------------------------------------------
# fold plans


def stratified_assignment(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per row; fold sizes and per-class counts differ by at most one.

    Each class is shuffled and dealt round-robin, the second class starting
    where the first stopped so that total fold sizes stay balanced.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = np.empty(y.size, dtype=np.int64)
    start = 0
    for label in (1, 0):
        members = np.flatnonzero(y == label)
        members = members[rng.permutation(members.size)]
        folds[members] = (start + np.arange(members.size)) % k
        start = (start + members.size) % k
    return folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    ids: tuple[str, ...]
    folds: np.ndarray

    @property
    def assignment(self) -> dict[str, int]:
        return dict(zip(self.ids, (int(f) for f in self.folds)))

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.folds, minlength=self.k).tolist()

    def same_as(self, other: "FoldPlan") -> bool:
        return self.ids == other.ids and np.array_equal(self.folds, other.folds)


def make_fold_plan(cohort: Cohort, k: int = 10, seed: int = 0) -> FoldPlan:
    n = len(cohort)
    if k < 2:
        raise ValueError("need at least two folds")
    if k > n:
        raise ValueError(f"cannot split {n} patients into {k} folds")
    y = cohort.y
    if y.min() == y.max():
        raise PipelineError("fold plan needs at least one faller and one non-faller")
    folds = stratified_assignment(y, k, seed)
    folds.setflags(write=False)
    return FoldPlan(k, int(seed), cohort.ids, folds)


# --------------------------------------------------------------------------
# normalisation


class Normalizer(TransformerMixin, BaseEstimator):
    """Centre and scale columns with training-set mean and population sd.

    Constant columns are centred and left with scale 1.
    """

    def fit(self, X, y=None):
        X = check_matrix(X)
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > SD_FLOOR, sd, 1.0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_fitted(self, "mean_")
        X = check_matrix(X, self.n_features_in_)
        return (X - self.mean_) / self.scale_


def fit_normalizer(X_train) -> Normalizer:
    return Normalizer().fit(X_train)


def apply(normalizer: Normalizer, X) -> np.ndarray:
    return normalizer.transform(X)


# --------------------------------------------------------------------------
# tuning


def grid_points(grid: Mapping[str, Sequence[float]]) -> list[dict[str, float]]:
    names = list(grid)
    if not names or any(len(grid[n]) == 0 for n in names):
        raise ValueError("tuning grid must be non-empty")
    return [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]


def inner_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    if np.bincount(y, minlength=2).min() < 2:
        raise PipelineError("too few patients of one class for inner cross-validation")
    return stratified_assignment(y, k, seed)


def inner_cv_scores(spec: ModelSpec, X, y, folds, k) -> np.ndarray:
    """Out-of-fold scores on the training set for a fixed spec."""
    scores = np.empty(y.size)
    for f in range(k):
        test = folds == f
        model = make_estimator(spec).fit(X[~test], y[~test])
        scores[test] = model.fall_score(X[test])
    return scores


def tune(
    spec: ModelSpec,
    grid: Mapping[str, Sequence[float]],
    X,
    y,
    inner_k: int = 3,
    seed: int = 0,
) -> ModelSpec:
    """Grid point with the lowest inner cross-validated misclassification rate.

    Ties go to the earliest grid point. A random-forest grid over ``ntree``
    alone is evaluated on prefixes of one forest per inner fold, which gives
    the same scores as refitting each size.
    """
    X = check_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    points = grid_points(grid)
    if len(points) == 1:
        return spec.with_params(**points[0])
    folds = inner_folds(y, inner_k, seed)
    errors = np.zeros(len(points))

    if spec.family == "RandomForest" and set(grid) == {"ntree"}:
        sizes = [int(p["ntree"]) for p in points]
        for f in range(inner_k):
            test = folds == f
            forest = RandomForest(ntree=max(sizes), random_state=spec.seed).fit(X[~test], y[~test])
            prefix = forest.prefix_scores(X[test], sizes)
            for i, size in enumerate(sizes):
                errors[i] += np.sum((prefix[size] > 0.5) != y[test])
    else:
        for i, point in enumerate(points):
            scores = inner_cv_scores(spec.with_params(**point), X, y, folds, inner_k)
            errors[i] = np.sum((scores > 0.5) != y)
    best = int(np.argmin(errors))
    return spec.with_params(**points[best])


# --------------------------------------------------------------------------
# strategies and predictions


@dataclass(frozen=True)
class PredictionStrategy:
    label: str
    spec: ModelSpec
    variable_set: VariableSet
    fallback: str = FALLBACK_NONE
    threshold: float = 0.5
    grid: Mapping[str, Sequence[float]] | None = None
    # {"min_specificity": 0.9} or {"max_accuracy": True}; None keeps `threshold`
    threshold_objective: Mapping | None = None
    threshold_mode: str = "pooled"

    def __post_init__(self):
        check_threshold(self.threshold)
        if self.fallback not in FALLBACKS:
            raise ValueError(f"fallback must be one of {FALLBACKS}")
        if self.threshold_mode not in ("pooled", "nested"):
            raise ValueError("threshold_mode must be 'pooled' or 'nested'")

    @property
    def population_label(self) -> str:
        if self.fallback == FALLBACK_MAJORITY:
            return f"All ({self.variable_set.name})"
        return self.variable_set.name

    @property
    def method_label(self) -> str:
        name = DISPLAY_NAMES[self.spec.family]
        return f"{name} + Majority" if self.fallback == FALLBACK_MAJORITY else name


def evaluation_population(cohort: Cohort, strategy: PredictionStrategy) -> Cohort:
    """Complete cases for the strategy's variables, or everyone with fallback."""
    cohort.check_variable_set(strategy.variable_set)
    if strategy.fallback == FALLBACK_MAJORITY:
        return cohort
    return select_complete(cohort, strategy.variable_set)


@dataclass(frozen=True)
class FoldRecord:
    fold: int
    n_train: int
    n_test: int
    n_fallback: int
    params: Mapping[str, float]
    model_seed: int
    inner_seed: int
    threshold: float
    digest: str

    def describe(self) -> str:
        params = json.dumps(dict(self.params), sort_keys=True)
        return (
            f"fold={self.fold} n_train={self.n_train} n_test={self.n_test} "
            f"n_fallback={self.n_fallback} params={params} model_seed={self.model_seed} "
            f"inner_seed={self.inner_seed} threshold={format_number(self.threshold)} "
            f"state={self.digest}"
        )


@dataclass(frozen=True)
class PredictionSet:
    """Out-of-fold predictions of one strategy, one entry per patient."""

    label: str
    population: str
    ids: tuple[str, ...]
    folds: np.ndarray
    y_true: np.ndarray
    scores: np.ndarray
    predicted: np.ndarray
    fallback_used: np.ndarray
    threshold: float = 0.5
    k: int = 0
    plan_seed: int = 0
    fold_records: tuple[FoldRecord, ...] = field(default=())

    def __post_init__(self):
        n = len(self.ids)
        for name in ("folds", "y_true", "scores", "predicted", "fallback_used"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
        if np.any((self.scores < 0) | (self.scores > 1)):
            raise ValueError("scores must lie in [0, 1]")
        if self.k == 0:
            object.__setattr__(self, "k", int(np.max(self.folds)) + 1 if n else 0)

    def __len__(self) -> int:
        return len(self.ids)

    def relabel(self, threshold: float) -> "PredictionSet":
        """Same scores, predictions recomputed at ``threshold``.

        Rows that used the fallback stay non-faller.
        """
        predicted = np.where(self.fallback_used, 0, self.scores > threshold).astype(np.int64)
        return replace(self, predicted=predicted, threshold=float(threshold))

    def restrict(self, mask) -> "PredictionSet":
        mask = np.asarray(mask, dtype=bool)
        return replace(
            self,
            ids=tuple(i for i, m in zip(self.ids, mask) if m),
            folds=self.folds[mask],
            y_true=self.y_true[mask],
            scores=self.scores[mask],
            predicted=self.predicted[mask],
            fallback_used=self.fallback_used[mask],
        )

    def to_csv(self) -> str:
        lines = ["id,fold,truth,score,predicted,fallback_used"]
        for i in range(len(self.ids)):
            lines.append(
                f"{self.ids[i]},{int(self.folds[i])},{int(self.y_true[i])},"
                f"{format_number(float(self.scores[i]))},{int(self.predicted[i])},"
                f"{int(bool(self.fallback_used[i]))}"
            )
        return "\n".join(lines) + "\n"


def state_digest(normalizer: Normalizer, spec: ModelSpec, model) -> str:
    """Hash of everything a fold learned from its training rows."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(normalizer.mean_).tobytes())
    h.update(np.ascontiguousarray(normalizer.scale_).tobytes())
    h.update(json.dumps(spec.params(), sort_keys=True).encode())
    _hash_fitted(h, model)
    return h.hexdigest()[:16]


def _hash_fitted(h, obj) -> None:
    for name in sorted(vars(obj)):
        if not name.endswith("_") or name.startswith("_"):
            continue
        value = getattr(obj, name)
        h.update(name.encode())
        if isinstance(value, np.ndarray):
            h.update(np.ascontiguousarray(value).tobytes())
        elif isinstance(value, (list, tuple)) and value and isinstance(value[0], BaseEstimator):
            for member in value:
                _hash_fitted(h, member)
        else:
            h.update(repr(value).encode())


def run_strategy(
    strategy: PredictionStrategy,
    cohort: Cohort,
    plan: FoldPlan,
    inner_k: int = 3,
) -> PredictionSet:
    """Out-of-fold scores for every patient in the plan's population."""
    population = evaluation_population(cohort, strategy)
    if population.ids != plan.ids:
        raise PipelineError(
            f"fold plan does not match the evaluation population of {strategy.label!r}"
        )
    X_all = population.columns(strategy.variable_set)
    y_all = population.y
    complete = ~np.isnan(X_all).any(axis=1)
    n = len(population)
    scores = np.zeros(n)
    fallback = ~complete
    thresholds = np.full(n, strategy.threshold)
    records = []
    spec = strategy.spec

    for f in range(plan.k):
        test = plan.folds == f
        train = ~test & complete
        X_train, y_train = X_all[train], y_all[train]
        if spec.family != "Majority" and (y_train.size == 0 or y_train.min() == y_train.max()):
            raise PipelineError(f"training data for fold {f} of {strategy.label!r} has one class")
        model_seed = derive_seed(plan.seed, "model", f, spec.family)
        inner_seed = derive_seed(plan.seed, "inner", f)
        normalizer = fit_normalizer(X_train)
        Z_train = normalizer.transform(X_train)
        fold_spec = spec.with_seed(model_seed)
        if strategy.grid:
            fold_spec = tune(fold_spec, strategy.grid, Z_train, y_train, inner_k, inner_seed)
        model = make_estimator(fold_spec).fit(Z_train, y_train)

        fold_threshold = strategy.threshold
        if strategy.threshold_objective and strategy.threshold_mode == "nested":
            fold_threshold = _nested_threshold(
                fold_spec, Z_train, y_train, inner_k, inner_seed, strategy.threshold_objective
            )
        scored = test & complete
        if scored.any():
            scores[scored] = model.fall_score(normalizer.transform(X_all[scored]))
        thresholds[test] = fold_threshold
        records.append(
            FoldRecord(
                fold=f,
                n_train=int(train.sum()),
                n_test=int(test.sum()),
                n_fallback=int((test & ~complete).sum()),
                params=fold_spec.params(),
                model_seed=model_seed,
                inner_seed=inner_seed,
                threshold=float(fold_threshold),
                digest=state_digest(normalizer, fold_spec, model),
            )
        )
        log.debug("%s %s", strategy.label, records[-1].describe())

    predicted = np.where(fallback, 0, scores > thresholds).astype(np.int64)
    preds = PredictionSet(
        label=strategy.label,
        population=strategy.population_label,
        ids=population.ids,
        folds=np.asarray(plan.folds, dtype=np.int64),
        y_true=y_all.copy(),
        scores=scores,
        predicted=predicted,
        fallback_used=fallback,
        threshold=float(strategy.threshold),
        k=plan.k,
        plan_seed=plan.seed,
        fold_records=tuple(records),
    )
    return preds


def _nested_threshold(spec, X, y, inner_k, seed, objective) -> float:
    from .evaluation import sweep_threshold

    folds = inner_folds(y, inner_k, seed)
    scores = inner_cv_scores(spec, X, y, folds, inner_k)
    return sweep_threshold(scores, y, objective).threshold
