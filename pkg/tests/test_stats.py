import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special
from scipy import stats as sps

from fallbench.stats import (
    SixNumberSummary,
    StatisticsError,
    bootstrap_percentile,
    chi_squared_2x2,
    jackknife_pseudovalues,
    jackknife_se,
    regularized_incomplete_beta,
    six_number_summary,
    student_t_sf,
    welch_t_test,
    wilcoxon_signed_rank,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def enumerate_signed_rank_p(d):
    """Two-sided p by listing all 2^n sign assignments of the ranks."""
    ranks = sps.rankdata(np.abs(d))
    observed = ranks[d > 0].sum()
    total = ranks.sum()
    centre = total / 2
    count = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        w = float(np.dot(signs, ranks))
        if abs(w - centre) >= abs(observed - centre) - 1e-9:
            count += 1
    return count / 2 ** len(d)


class TestSixNumberSummary:
    def test_hand_example(self):
        s = six_number_summary([1, 2, 3, 4])
        assert s.as_tuple() == (1.0, 1.75, 2.5, 2.5, 3.25, 4.0)

    def test_single_value(self):
        assert six_number_summary([7]).as_tuple() == (7.0,) * 6

    def test_rejects_unordered_knots(self):
        with pytest.raises(ValueError):
            SixNumberSummary(0, 3, 2, 2, 4, 5)

    def test_empty_sample(self):
        with pytest.raises(StatisticsError):
            six_number_summary([])

    @given(st.lists(finite, min_size=1, max_size=50))
    def test_knots_ordered_and_mean_inside(self, xs):
        s = six_number_summary(xs)
        assert s.min <= s.q1 <= s.median <= s.q3 <= s.max
        assert s.min <= s.mean <= s.max


class TestTails:
    @pytest.mark.parametrize("a", [0.5, 1.0, 2.5, 10.0, 60.0])
    @pytest.mark.parametrize("b", [0.5, 1.0, 3.0, 25.0])
    @pytest.mark.parametrize("x", [0.0, 0.01, 0.3, 0.5, 0.77, 0.99, 1.0])
    def test_incomplete_beta_matches_scipy(self, a, b, x):
        assert regularized_incomplete_beta(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)

    @pytest.mark.parametrize("df", [1, 2.5, 7, 30, 300])
    @pytest.mark.parametrize("t", [0.0, 0.4, 1.96, 4.0, 12.0])
    def test_student_t_tail(self, df, t):
        assert student_t_sf(t, df) == pytest.approx(sps.t.sf(t, df), rel=1e-9, abs=1e-15)


class TestWelch:
    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.normal(0, 1, rng.integers(3, 40))
            b = rng.normal(0.5, 2, rng.integers(3, 40))
            res = welch_t_test(a, b)
            ref = sps.ttest_ind(a, b, equal_var=False)
            assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
            assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_identical_constant_samples_are_degenerate(self):
        res = welch_t_test([2, 2, 2], [2, 2])
        assert res.degenerate and res.p_value == 1.0

    def test_too_small(self):
        with pytest.raises(StatisticsError):
            welch_t_test([1.0], [1.0, 2.0])


class TestChiSquared:
    @pytest.mark.parametrize(
        "table, published",
        [((29, 25, 80, 203), 4.6e-4), ((43, 11, 158, 125), 1.8e-3), ((31, 23, 144, 139), 4.6e-1)],
    )
    def test_published_history_rows(self, table, published):
        p = chi_squared_2x2(*table).p_value
        assert abs(p - published) / published < 0.05

    def test_matches_scipy_with_correction(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            t = rng.integers(1, 60, size=4)
            ref = sps.chi2_contingency(t.reshape(2, 2), correction=True)
            res = chi_squared_2x2(*t)
            assert res.statistic == pytest.approx(ref.statistic, rel=1e-12, abs=1e-14)
            assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_zero_margin(self):
        with pytest.raises(StatisticsError):
            chi_squared_2x2(0, 0, 3, 4)


class TestWilcoxon:
    def test_exact_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(1, 11))
            d = rng.permutation(np.arange(1, n + 1)) * rng.choice([-1, 1], n) + rng.random(n) * 0.1
            pairs = np.column_stack([d, np.zeros(n)])
            res = wilcoxon_signed_rank(pairs, method="exact")
            assert res.p_value == pytest.approx(enumerate_signed_rank_p(d), abs=1e-12)

    def test_approx_matches_scipy_with_ties(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            d = rng.integers(-4, 5, size=40).astype(float)
            if not np.any(d):
                continue
            res = wilcoxon_signed_rank(np.column_stack([d, np.zeros_like(d)]), method="approx")
            ref = sps.wilcoxon(d, zero_method="wilcox", correction=True, method="approx")
            assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_identical_pairs_degenerate(self):
        res = wilcoxon_signed_rank([(1.0, 1.0), (2.0, 2.0)])
        assert res.degenerate and res.p_value == 1.0

    def test_all_positive_thirty(self):
        pairs = [(i + 1.0, 0.0) for i in range(30)]
        assert wilcoxon_signed_rank(pairs).p_value < 1e-3

    @settings(max_examples=60)
    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=25))
    def test_swap_flips_sign_keeps_p(self, pairs):
        a = wilcoxon_signed_rank(pairs)
        b = wilcoxon_signed_rank([(y, x) for x, y in pairs])
        assert a.statistic == -b.statistic
        assert a.p_value == pytest.approx(b.p_value, abs=1e-12)
        assert 0.0 <= a.p_value <= 1.0


class TestJackknife:
    def test_mean_standard_error(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(size=rng.integers(2, 60))
            assert jackknife_se(x, np.mean) == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), abs=1e-12)

    def test_pseudovalues_of_mean_are_data(self):
        x = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
        np.testing.assert_allclose(jackknife_pseudovalues(x, np.mean), x, atol=1e-12)

    def test_undefined_subsamples_flag_partial(self):
        def ratio(v):
            return None if v.sum() == v.size else v.sum() / (v.size - v.sum())

        se, partial = jackknife_se([1, 1, 0, 0], ratio, return_partial=True)
        assert math.isfinite(se) and not partial
        _, partial = jackknife_se([1, 1, 0], ratio, return_partial=True)
        assert partial


class TestBootstrap:
    def test_deterministic_and_brackets_mean(self):
        x = np.random.default_rng(0).normal(5, 1, 100)
        lo, hi = bootstrap_percentile(x, np.mean, B=500, seed=3)
        assert (lo, hi) == bootstrap_percentile(x, np.mean, B=500, seed=3)
        assert lo < x.mean() < hi
