"""Metrics with jackknife standard errors, paired strategy comparison,
ROC curves with bootstrap FPR bands, and threshold tuning."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .pipeline import PredictionSet
from .stats import TestResult, jackknife_variance, wilcoxon_signed_rank

METRICS = ("mmce", "sensitivity", "specificity", "precision", "f1")
AGGREGATIONS = ("pooled", "fold_mean")
BAND_GRID = np.round(np.arange(21) * 0.05, 10)
MAX_REDRAWS = 100


class EvaluationError(ValueError):
    """Predictions cannot support the requested evaluation."""


class DegenerateThresholdWarning(UserWarning):
    """No threshold meets the objective with non-zero sensitivity."""


# --------------------------------------------------------------------------
# confusion matrix and metrics


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_counts(y_true, predicted) -> ConfusionMatrix:
    y = np.asarray(y_true, dtype=bool)
    p = np.asarray(predicted, dtype=bool)
    return ConfusionMatrix(
        tp=int(np.sum(y & p)),
        fp=int(np.sum(~y & p)),
        fn=int(np.sum(y & ~p)),
        tn=int(np.sum(~y & ~p)),
    )


def confusion(preds: PredictionSet) -> ConfusionMatrix:
    if len(preds) == 0:
        raise EvaluationError("no predictions to tabulate")
    return confusion_counts(preds.y_true, preds.predicted)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


METRIC_FORMULAS: dict[str, Callable[[ConfusionMatrix], float]] = {
    "mmce": lambda c: _ratio(c.fp + c.fn, c.total),
    "sensitivity": lambda c: _ratio(c.tp, c.tp + c.fn),
    "specificity": lambda c: _ratio(c.tn, c.tn + c.fp),
    "precision": lambda c: _ratio(c.tp, c.tp + c.fp),
    "f1": lambda c: _ratio(2 * c.tp, 2 * c.tp + c.fn + c.fp),
}


@dataclass(frozen=True)
class Metric:
    """A metric value (NaN when undefined) with an optional standard error."""

    value: float
    se: float | None = None
    partial: bool = False

    @property
    def defined(self) -> bool:
        return not math.isnan(self.value)

    def render(self) -> str:
        if not self.defined:
            return "-"
        text = f"{self.value + 0.0:.3f}"
        if self.se is None:
            return text
        se = "nan" if math.isnan(self.se) else f"{self.se + 0.0:.3f}"
        return f"{text} (± {se}{'*' if self.partial else ''})"


@dataclass(frozen=True)
class MetricReport:
    mmce: Metric
    sensitivity: Metric
    specificity: Metric
    precision: Metric
    f1: Metric

    def __getitem__(self, name: str) -> Metric:
        if name not in METRICS:
            raise KeyError(name)
        return getattr(self, name)

    def values(self) -> dict[str, float]:
        return {name: self[name].value for name in METRICS}


def metrics(cm: ConfusionMatrix) -> MetricReport:
    if cm.total == 0:
        raise EvaluationError("metrics need at least one prediction")
    return MetricReport(**{name: Metric(METRIC_FORMULAS[name](cm)) for name in METRICS})


def _fold_indices(preds: PredictionSet) -> list[np.ndarray]:
    return [np.flatnonzero(preds.folds == f) for f in range(preds.k)]


def loo_fold_values(preds: PredictionSet, metric: str) -> list[np.ndarray]:
    """Per fold, the metric recomputed with each test patient left out.

    Entries are NaN where the metric is undefined; order follows the
    patients' order within the fold.
    """
    formula = METRIC_FORMULAS[metric]
    out = []
    for idx in _fold_indices(preds):
        y = preds.y_true[idx].astype(bool)
        p = preds.predicted[idx].astype(bool)
        full = confusion_counts(y, p)
        vals = np.empty(idx.size)
        for i in range(idx.size):
            # remove patient i's cell from the fold's counts
            cm = ConfusionMatrix(
                tp=full.tp - int(y[i] and p[i]),
                fp=full.fp - int(not y[i] and p[i]),
                fn=full.fn - int(y[i] and not p[i]),
                tn=full.tn - int(not y[i] and not p[i]),
            )
            vals[i] = formula(cm) if cm.total > 0 else math.nan
        out.append(vals)
    return out


def fold_values(preds: PredictionSet, metric: str) -> np.ndarray:
    formula = METRIC_FORMULAS[metric]
    return np.array(
        [formula(confusion_counts(preds.y_true[i], preds.predicted[i])) for i in _fold_indices(preds)]
    )


def metric_with_se(preds: PredictionSet, metric: str, aggregation: str = "pooled") -> Metric:
    """One metric with its fold-stratified jackknife standard error.

    Each fold contributes the jackknife variance of its own leave-one-out
    values; the aggregate variance is their sum divided by the squared number
    of contributing folds. Undefined leave-one-out values are skipped and the
    error is then flagged partial.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    if aggregation == "pooled":
        value = METRIC_FORMULAS[metric](confusion(preds))
    else:
        per_fold = fold_values(preds, metric)
        value = float(np.mean(per_fold[~np.isnan(per_fold)])) if np.any(~np.isnan(per_fold)) else math.nan

    partial = False
    variances = []
    for loo in loo_fold_values(preds, metric):
        var, used = jackknife_variance(loo)
        if used < loo.size:
            partial = True
        if not math.isnan(var):
            variances.append(var)
        elif loo.size:
            partial = True
    if variances:
        se = math.sqrt(sum(variances)) / len(variances)
    else:
        se = math.nan
    return Metric(float(value), se, partial)


def metrics_with_se(preds: PredictionSet, aggregation: str = "pooled") -> MetricReport:
    if len(preds) == 0:
        raise EvaluationError("no predictions to evaluate")
    return MetricReport(**{m: metric_with_se(preds, m, aggregation) for m in METRICS})


# --------------------------------------------------------------------------
# paired comparison


def pseudosamples(preds: PredictionSet, metric: str, unit: str = "loo") -> np.ndarray:
    """Union of per-fold jackknife units, ordered by fold then patient.

    ``unit="loo"`` gives the leave-one-out metric values; ``"pseudovalue"``
    gives ``m * theta_f - (m - 1) * theta_f(-i)`` within each fold of size m.
    """
    loo = loo_fold_values(preds, metric)
    if unit == "loo":
        return np.concatenate(loo) if loo else np.empty(0)
    if unit != "pseudovalue":
        raise ValueError("unit must be 'loo' or 'pseudovalue'")
    full = fold_values(preds, metric)
    parts = [v.size * theta - (v.size - 1) * v for theta, v in zip(full, loo)]
    return np.concatenate(parts) if parts else np.empty(0)


def check_paired(a: PredictionSet, b: PredictionSet) -> None:
    if a.ids != b.ids:
        raise EvaluationError(f"{a.label!r} and {b.label!r} were evaluated on different patients")
    if not np.array_equal(a.folds, b.folds):
        raise EvaluationError(f"{a.label!r} and {b.label!r} use different fold plans")


def compare_strategies(
    a: PredictionSet,
    b: PredictionSet,
    metric: str = "mmce",
    unit: str = "pseudovalue",
) -> TestResult:
    """Wilcoxon signed-rank test on paired jackknife units of ``a`` minus ``b``.

    Pairs share fold and deleted patient. Pairs where either side is
    undefined are dropped. The statistic is the signed rank sum, so swapping
    the arguments flips its sign.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    check_paired(a, b)
    ua, ub = pseudosamples(a, metric, unit), pseudosamples(b, metric, unit)
    keep = np.isfinite(ua) & np.isfinite(ub)
    ua, ub = ua[keep], ub[keep]
    if ua.size == 0:
        return TestResult(0.0, 1.0, 0, degenerate=True, method="wilcoxon")
    # equal fold counts can still differ in the last bit after arithmetic
    ub = np.where(np.abs(ua - ub) < 1e-12, ua, ub)
    return wilcoxon_signed_rank(np.column_stack((ua, ub)))


# --------------------------------------------------------------------------
# ROC


@dataclass(frozen=True)
class ROCCurve:
    """Cross-validated ROC curve; point j classifies ``score >= thresholds[j]``."""

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auroc: float
    fpr_lo: np.ndarray | None = None
    fpr_hi: np.ndarray | None = None
    band_grid: np.ndarray | None = None
    band_lo: np.ndarray | None = None
    band_hi: np.ndarray | None = None
    band_fpr: np.ndarray | None = None

    @property
    def has_bands(self) -> bool:
        return self.fpr_lo is not None

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.tpr.tolist(), self.fpr.tolist()))

    def fpr_at(self, tpr: float) -> float:
        return float(fpr_at_tpr(self.tpr, self.fpr, np.array([tpr]))[0])


def roc_arrays(scores, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thresholds (descending, +inf first) with TPR and FPR at each."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC needs both fallers and non-fallers")
    order = np.argsort(-scores, kind="mergesort")
    s, lab = scores[order], y[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(lab)[ends]
    fp = (ends + 1) - tp
    thresholds = np.r_[np.inf, s[ends]]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    return thresholds, tpr, fpr


def trapezoid_auc(fpr, tpr) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc(preds: PredictionSet) -> ROCCurve:
    thresholds, tpr, fpr = roc_arrays(preds.scores, preds.y_true)
    return ROCCurve(thresholds, tpr, fpr, trapezoid_auc(fpr, tpr))


def fpr_at_tpr(tpr: np.ndarray, fpr: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Smallest FPR among curve points reaching each TPR in ``grid``."""
    idx = np.searchsorted(tpr, np.asarray(grid) - 1e-12, side="left")
    return fpr[np.minimum(idx, tpr.size - 1)]


def roc_bands(
    preds: PredictionSet,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    grid: Sequence[float] = BAND_GRID,
) -> ROCCurve:
    """ROC curve with percentile bootstrap bands for the FPR.

    Patients are resampled with replacement; resamples with a single class
    are redrawn. At each TPR grid point the band is the ``alpha/2`` and
    ``1 - alpha/2`` quantiles of the resampled FPR. Each curve point takes
    the band of the nearest grid point, shifted to the curve's own FPR.
    """
    if B < 1:
        raise ValueError("B must be positive")
    curve = roc(preds)
    grid = np.asarray(grid, dtype=float)
    y = np.asarray(preds.y_true, dtype=bool)
    scores = np.asarray(preds.scores, dtype=float)
    n = y.size
    rng = np.random.default_rng(seed)
    samples = np.empty((B, grid.size))
    for b in range(B):
        for _ in range(MAX_REDRAWS):
            idx = rng.integers(0, n, n)
            yb = y[idx]
            if yb.any() and not yb.all():
                break
        else:
            raise EvaluationError("bootstrap resamples keep containing a single class")
        _, tpr_b, fpr_b = roc_arrays(scores[idx], yb)
        samples[b] = fpr_at_tpr(tpr_b, fpr_b, grid)
    band_lo = np.quantile(samples, alpha / 2.0, axis=0)
    band_hi = np.quantile(samples, 1.0 - alpha / 2.0, axis=0)
    band_fpr = fpr_at_tpr(curve.tpr, curve.fpr, grid)

    nearest = np.abs(curve.tpr[:, None] - grid[None, :]).argmin(axis=1)
    lo = np.clip(curve.fpr + band_lo[nearest] - band_fpr[nearest], 0.0, curve.fpr)
    hi = np.clip(curve.fpr + band_hi[nearest] - band_fpr[nearest], curve.fpr, 1.0)
    return ROCCurve(
        curve.thresholds, curve.tpr, curve.fpr, curve.auroc,
        fpr_lo=lo, fpr_hi=hi, band_grid=grid, band_lo=band_lo, band_hi=band_hi,
        band_fpr=band_fpr,
    )


def _csv_number(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def roc_to_csv(curve: ROCCurve) -> str:
    lines = ["threshold,tpr,fpr,fpr_lo,fpr_hi"]
    for j in range(curve.thresholds.size):
        lo = _csv_number(curve.fpr_lo[j]) if curve.has_bands else ""
        hi = _csv_number(curve.fpr_hi[j]) if curve.has_bands else ""
        lines.append(
            f"{_csv_number(curve.thresholds[j])},{_csv_number(curve.tpr[j])},"
            f"{_csv_number(curve.fpr[j])},{lo},{hi}"
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# threshold tuning


class ThresholdChoice(NamedTuple):
    threshold: float
    sensitivity: float
    specificity: float
    degenerate: bool


class TunedThreshold(NamedTuple):
    threshold: float
    report: MetricReport
    degenerate: bool


def _objective(objective: Mapping) -> tuple[str, float]:
    if "min_specificity" in objective:
        target = float(objective["min_specificity"])
        if not 0.0 <= target <= 1.0:
            raise ValueError("min_specificity must lie in [0, 1]")
        return "min_specificity", target
    if objective.get("max_accuracy"):
        return "max_accuracy", 0.0
    raise ValueError("objective must be {'min_specificity': s} or {'max_accuracy': True}")


def threshold_candidates(scores) -> np.ndarray:
    """Every distinct cut for the rule ``score > t``, ascending.

    The unique scores plus one value just below the smallest score (which
    labels everyone a faller).
    """
    uniq = np.unique(np.asarray(scores, dtype=float))
    return np.r_[np.nextafter(uniq[0], -np.inf), uniq]


def sweep_threshold(scores, y, objective: Mapping) -> ThresholdChoice:
    """Best threshold for ``score > t`` over all distinct cuts.

    ``min_specificity``: highest sensitivity with specificity at least the
    target. ``max_accuracy``: lowest misclassification rate. Ties go to the
    higher specificity, then the lower threshold.
    """
    kind, target = _objective(objective)
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("threshold tuning needs both fallers and non-fallers")
    cands = threshold_candidates(scores)
    # counts of scores <= t via sorted arrays
    pos_sorted = np.sort(scores[y])
    neg_sorted = np.sort(scores[~y])
    tp = n_pos - np.searchsorted(pos_sorted, cands, side="right")
    tn = np.searchsorted(neg_sorted, cands, side="right")
    sens = tp / n_pos
    spec = tn / n_neg
    if kind == "min_specificity":
        feasible = tn >= target * n_neg - 1e-9
        primary = np.where(feasible, tp, -1)
    else:
        primary = tp + tn  # correct predictions
    # lexicographic: primary desc, specificity desc, threshold asc
    best = np.lexsort((cands, -tn, -primary))[0]
    degenerate = kind == "min_specificity" and bool(tp[best] == 0)
    return ThresholdChoice(float(cands[best]), float(sens[best]), float(spec[best]), degenerate)


def tune_threshold(
    preds: PredictionSet,
    objective: Mapping,
    aggregation: str = "pooled",
) -> TunedThreshold:
    """Choose a threshold on pooled out-of-fold scores and re-evaluate.

    Patients scored by the missing-data fallback stay non-fallers and are
    left out of the sweep.
    """
    scored = ~np.asarray(preds.fallback_used, dtype=bool)
    choice = sweep_threshold(preds.scores[scored], preds.y_true[scored], objective)
    if choice.degenerate:
        warnings.warn(
            f"{preds.label}: no threshold meets {dict(objective)} with non-zero sensitivity",
            DegenerateThresholdWarning,
            stacklevel=2,
        )
    relabelled = preds.relabel(choice.threshold)
    return TunedThreshold(choice.threshold, metrics_with_se(relabelled, aggregation), choice.degenerate)


# --------------------------------------------------------------------------
# report


REPORT_HEADER = ("Strategy", "Population", "MMCE", "Sensitivity", "Specificity", "Precision", "F1")


def emit_report(rows: Sequence[tuple[str, str, MetricReport]]) -> str:
    lines = ["\t".join(REPORT_HEADER)]
    for label, population, report in rows:
        cells = [label, population] + [report[m].render() for m in METRICS]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
