"""Descriptive and resampling statistics.

Everything here is a pure function of its inputs (plus an explicit seed where
randomness is involved). Distribution tails are computed locally so the module
only needs numpy and the standard library.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "SixNumberSummary",
    "TestResult",
    "six_number_summary",
    "welch_t_test",
    "chi_squared_2x2",
    "wilcoxon_signed_rank",
    "jackknife_pseudosamples",
    "jackknife_pseudovalues",
    "jackknife_se",
    "jackknife_variance",
    "bootstrap_percentile",
    "student_t_sf",
    "normal_sf",
    "chi2_sf_1df",
    "regularized_incomplete_beta",
]

WILCOXON_EXACT_MAX_N = 20


class StatisticsError(ValueError):
    """Raised when a test or estimator is undefined for its input."""


@dataclass(frozen=True)
class SixNumberSummary:
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float

    def __post_init__(self):
        knots = (self.min, self.q1, self.median, self.q3, self.max)
        if any(b < a for a, b in zip(knots, knots[1:])):
            raise ValueError(f"summary knots are not ordered: {knots}")
        if not self.min <= self.mean <= self.max:
            raise ValueError(f"mean {self.mean} outside [{self.min}, {self.max}]")

    @property
    def knots(self) -> tuple[float, float, float, float, float]:
        """The five order-statistic knots (mean excluded)."""
        return (self.min, self.q1, self.median, self.q3, self.max)

    def as_tuple(self) -> tuple[float, ...]:
        return (self.min, self.q1, self.median, self.mean, self.q3, self.max)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: int
    degenerate: bool = False
    method: str = ""
    df: float | None = None

    __test__ = False  # not a pytest class


def six_number_summary(values: Iterable[float]) -> SixNumberSummary:
    """Min, quartiles (linear interpolation at p*(n-1)), mean and max."""
    x = np.asarray(list(values), dtype=float)
    if x.size == 0:
        raise StatisticsError("six-number summary of an empty sample")
    if not np.all(np.isfinite(x)):
        raise StatisticsError("six-number summary needs finite values")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    mean = float(np.mean(x))
    lo, hi = float(x.min()), float(x.max())
    # float round-off can push the mean a hair outside [min, max] for constant input
    mean = min(max(mean, lo), hi)
    return SixNumberSummary(lo, float(q1), float(med), mean, float(q3), hi)


# --------------------------------------------------------------------------
# distribution tails


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise StatisticsError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the fraction converges fast only on one side of the mean a/(a+b)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) of Student's t with `df` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def chi2_sf_1df(x: float) -> float:
    if x <= 0:
        return 1.0
    return math.erfc(math.sqrt(x / 2.0))


# --------------------------------------------------------------------------
# classical tests


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.size < 2 or y.size < 2:
        raise StatisticsError("Welch t-test needs at least two values per sample")
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(ddof=1), y.var(ddof=1)
    sx, sy = vx / x.size, vy / y.size
    scale2 = sx + sy
    n = int(x.size + y.size)
    if scale2 == 0.0:
        if mx == my:
            return TestResult(0.0, 1.0, n, degenerate=True, method="welch")
        raise StatisticsError("both samples are constant with different means")
    t = (mx - my) / math.sqrt(scale2)
    df = scale2**2 / (sx**2 / (x.size - 1) + sy**2 / (y.size - 1))
    p = min(1.0, 2.0 * student_t_sf(abs(t), df))
    return TestResult(float(t), p, n, method="welch", df=float(df))


def chi_squared_2x2(yes_a: int, no_a: int, yes_b: int, no_b: int) -> TestResult:
    """Pearson chi-squared on a 2x2 table with Yates' continuity correction."""
    table = np.array([[yes_a, no_a], [yes_b, no_b]], dtype=float)
    if np.any(table < 0):
        raise StatisticsError("counts must be non-negative")
    rows, cols = table.sum(axis=1), table.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise StatisticsError("2x2 table has a zero marginal total")
    total = table.sum()
    expected = np.outer(rows, cols) / total
    resid = np.maximum(np.abs(table - expected) - 0.5, 0.0)
    stat = float(np.sum(resid**2 / expected))
    return TestResult(stat, chi2_sf_1df(stat), int(total), method="chi2-yates")


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _signed_rank_exact_p(w_plus: int, n: int) -> float:
    # number of sign assignments giving each positive-rank sum, ranks 1..n
    top = n * (n + 1) // 2
    counts = np.zeros(top + 1, dtype=np.int64)
    counts[0] = 1
    for r in range(1, n + 1):
        counts[r:] = counts[r:] + counts[:-r].copy()
    total = float(2**n)
    lower = counts[: w_plus + 1].sum() / total
    upper = counts[w_plus:].sum() / total
    return min(1.0, 2.0 * min(lower, upper))


def wilcoxon_signed_rank(
    pairs: Iterable[tuple[float, float]] | np.ndarray,
    method: str = "auto",
) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired values.

    Zero differences are dropped. The reported statistic is the signed rank
    sum (positive ranks minus negative ranks) of ``first - second``, so
    swapping the members of each pair flips its sign.

    ``method`` is ``"auto"`` (exact when at most 20 non-zero differences and no
    tied magnitudes, else normal approximation), ``"exact"`` or ``"approx"``.
    """
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise StatisticsError("need at least one (x, y) pair")
    d = arr[:, 0] - arr[:, 1]
    d = d[d != 0.0]
    n = int(d.size)
    if n == 0:
        return TestResult(0.0, 1.0, 0, degenerate=True, method="wilcoxon")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    signed = 2.0 * w_plus - total
    has_ties = np.unique(np.abs(d)).size < n

    if method == "auto":
        method = "exact" if (n <= WILCOXON_EXACT_MAX_N and not has_ties) else "approx"
    if method == "exact":
        if has_ties:
            raise StatisticsError("exact signed-rank distribution assumes untied magnitudes")
        p = _signed_rank_exact_p(int(round(w_plus)), n)
        return TestResult(signed, p, n, method="wilcoxon-exact")
    if method != "approx":
        raise ValueError(f"unknown method {method!r}")

    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    if var <= 0:
        return TestResult(signed, 1.0, n, degenerate=True, method="wilcoxon-approx")
    dev = max(abs(w_plus - total / 2.0) - 0.5, 0.0)
    p = min(1.0, 2.0 * normal_sf(dev / math.sqrt(var)))
    return TestResult(signed, p, n, method="wilcoxon-approx")


# --------------------------------------------------------------------------
# resampling

Statistic = Callable[[np.ndarray], "float | None"]


def _evaluate(statistic: Statistic, x: np.ndarray) -> float:
    try:
        value = statistic(x)
    except ZeroDivisionError:
        return math.nan
    if value is None:
        return math.nan
    return float(value)


def jackknife_pseudosamples(sample: Sequence[float], statistic: Statistic) -> np.ndarray:
    """Leave-one-out statistic values, in deletion order.

    Entries are NaN where the statistic is undefined on the reduced sample
    (it returned None or NaN, or divided by zero).
    """
    x = np.asarray(sample, dtype=float)
    n = x.size
    if n < 2:
        raise StatisticsError("jackknife needs at least two observations")
    mask = np.ones(n, dtype=bool)
    out = np.empty(n)
    for i in range(n):
        mask[i] = False
        out[i] = _evaluate(statistic, x[mask])
        mask[i] = True
    return out


def jackknife_pseudovalues(sample: Sequence[float], statistic: Statistic) -> np.ndarray:
    """Tukey pseudovalues n*theta - (n-1)*theta_(-i)."""
    x = np.asarray(sample, dtype=float)
    loo = jackknife_pseudosamples(x, statistic)
    full = _evaluate(statistic, x)
    return x.size * full - (x.size - 1) * loo


def jackknife_variance(loo_values: Sequence[float]) -> tuple[float, int]:
    """Jackknife variance from leave-one-out values, ignoring NaN entries.

    Returns ``(variance, n_used)``. Fewer than two usable values gives
    variance NaN.
    """
    v = np.asarray(loo_values, dtype=float)
    v = v[np.isfinite(v)]
    m = v.size
    if m < 2:
        return math.nan, m
    dev = v - v.mean()
    return float((m - 1) / m * np.dot(dev, dev)), m


def jackknife_se(
    sample: Sequence[float],
    statistic: Statistic,
    *,
    return_partial: bool = False,
):
    """Jackknife standard error of ``statistic`` on ``sample``.

    Leave-one-out subsamples where the statistic is undefined are skipped.
    With ``return_partial=True`` the result is ``(se, partial)`` where
    ``partial`` says whether any subsample was skipped.
    """
    loo = jackknife_pseudosamples(sample, statistic)
    var, used = jackknife_variance(loo)
    se = math.sqrt(var) if np.isfinite(var) else math.nan
    if return_partial:
        return se, used < loo.size
    return se


def bootstrap_percentile(
    sample: Sequence[float],
    statistic: Statistic,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int | None = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval (alpha/2, 1 - alpha/2)."""
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise StatisticsError("bootstrap of an empty sample")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if B < 100:
        raise ValueError("use at least 100 bootstrap replicates")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(B, x.size))
    reps = np.array([_evaluate(statistic, x[row]) for row in idx])
    reps = reps[np.isfinite(reps)]
    lo, hi = np.quantile(reps, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)
