import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize
from scipy import stats as sps
from sklearn.base import clone

from fallbench.learners import (
    FAMILIES,
    AveragedNeuralNet,
    LinearDiscriminant,
    LogisticRegression,
    ModelSpec,
    NaiveBayes,
    NeuralNet,
    RandomForest,
    SupportVectorMachine,
    fit,
    make_estimator,
    predict,
    score,
)
from fallbench.learners.svm import gaussian_kernel


def noisy_linear(n=300, p=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    logits = X @ np.linspace(1.0, -0.5, p) + 0.3
    y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(int)
    return X, y


def xor_data(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    return X, y


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_scores_in_unit_interval_and_deterministic(family):
    X, y = noisy_linear(120, 3)
    a = fit(ModelSpec(family, seed=7), X, y)
    b = fit(ModelSpec(family, seed=7), X, y)
    s = score(a, X)
    assert s.shape == (120,)
    assert np.all((s >= 0) & (s <= 1))
    np.testing.assert_array_equal(s, score(b, X))
    np.testing.assert_array_equal(predict(a, X, 0.3), (s > 0.3).astype(int))


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_estimators_follow_sklearn_api(family):
    est = make_estimator(ModelSpec(family))
    clone(est).set_params(**est.get_params())
    X, y = noisy_linear(60, 2)
    proba = est.fit(X, y).predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)


def test_model_spec_rejects_unknown():
    with pytest.raises(ValueError):
        ModelSpec("Boosting")
    with pytest.raises(ValueError):
        ModelSpec("SvmLinear", {"sigma": 1.0})


def test_single_class_training_rejected():
    X = np.zeros((5, 2))
    with pytest.raises(ValueError):
        LogisticRegression().fit(X, np.zeros(5))


def test_majority_scores_zero():
    X, y = noisy_linear(50, 2)
    assert np.all(fit(ModelSpec("Majority"), X, y).fall_score(X) == 0)


class TestLogisticRegression:
    def test_matches_independent_optimiser(self):
        X, y = noisy_linear()
        model = LogisticRegression().fit(X, y)
        Z = np.column_stack([np.ones(len(y)), X])

        def nll(beta):
            eta = Z @ beta
            return np.sum(np.logaddexp(0, eta) - y * eta)

        ref = optimize.minimize(nll, np.zeros(Z.shape[1]), method="BFGS", options={"gtol": 1e-10}).x
        np.testing.assert_allclose(np.r_[model.intercept_, model.coef_], ref, atol=1e-4)
        mu = 1 / (1 + np.exp(-(Z @ np.r_[model.intercept_, model.coef_])))
        assert np.linalg.norm(Z.T @ (mu - y)) < 1e-6

    def test_separable_data_stays_finite(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        model = LogisticRegression().fit(X, [0, 0, 1, 1])
        assert np.all(np.isfinite(model.coef_))
        assert model.predict(X).tolist() == [0, 0, 1, 1]


class TestLinearDiscriminant:
    def test_direction_recovers_bayes_rule(self):
        rng = np.random.default_rng(2)
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        mu0, mu1 = np.array([0.0, 0.0]), np.array([1.0, -0.5])
        X = np.vstack([rng.multivariate_normal(mu0, cov, 1000), rng.multivariate_normal(mu1, cov, 1000)])
        y = np.r_[np.zeros(1000), np.ones(1000)]
        model = LinearDiscriminant().fit(X, y)
        truth = np.linalg.solve(cov, mu1 - mu0)
        cos = model.coef_ @ truth / (np.linalg.norm(model.coef_) * np.linalg.norm(truth))
        assert cos > 0.99

    def test_constant_column_survives(self):
        X, y = noisy_linear(80, 2)
        X = np.column_stack([X, np.ones(80)])
        s = LinearDiscriminant().fit(X, y).fall_score(X)
        assert np.all(np.isfinite(s))


class TestNaiveBayes:
    def test_closed_form_posterior(self):
        rng = np.random.default_rng(4)
        X = np.column_stack([rng.normal(size=40), rng.integers(0, 2, 40)])
        y = np.r_[np.zeros(20, int), np.ones(20, int)]
        x_new = np.array([[0.3, 1.0], [-1.2, 0.0]])
        log_post = np.zeros((2, 2))
        for c in (0, 1):
            Xc = X[y == c]
            prior = np.log(np.mean(y == c))
            gauss = sps.norm.logpdf(x_new[:, 0], Xc[:, 0].mean(), Xc[:, 0].std())
            p1 = (Xc[:, 1].sum() + 1) / (len(Xc) + 2)
            bern = np.where(x_new[:, 1] == 1, np.log(p1), np.log(1 - p1))
            log_post[:, c] = prior + gauss + bern
        expected = 1 / (1 + np.exp(log_post[:, 0] - log_post[:, 1]))
        got = NaiveBayes().fit(X, y).fall_score(x_new)
        np.testing.assert_allclose(got, expected, atol=1e-9)


class TestSupportVectorMachine:
    def test_two_point_hard_margin(self):
        X = np.array([[-1.0], [1.0]])
        model = SupportVectorMachine(kernel="linear", C=2.0**4).fit(X, [0, 1])
        assert abs(model.coef_[0] - 1) < 1e-2
        assert abs(model.intercept_) < 1e-2

    @pytest.mark.parametrize("C", [0.0625, 1.0, 16.0])
    def test_kkt_and_duality_gap(self, C):
        X, y = noisy_linear(150, 3, seed=1)
        model = SupportVectorMachine(kernel="linear", C=C, tol=1e-6).fit(X, y)
        assert model.kkt_gap_ < 1e-6
        ys = np.where(y == 1, 1.0, -1.0)
        a = model.alpha_
        assert abs(a @ ys) < 1e-8
        assert np.all((a >= -1e-12) & (a <= C + 1e-12))
        K = X @ X.T
        dual = a.sum() - 0.5 * (a * ys) @ K @ (a * ys)
        w, b = model.coef_, model.intercept_
        primal = 0.5 * w @ w + C * np.maximum(0, 1 - ys * (X @ w + b)).sum()
        assert primal >= dual - 1e-6
        assert primal - dual <= 1e-3 * max(1.0, primal)

    def test_gaussian_kernel_identity(self):
        X = np.random.default_rng(0).normal(size=(10, 3))
        np.testing.assert_allclose(np.diag(gaussian_kernel(X, X, 0.7)), 1.0)

    def test_gaussian_separates_xor(self):
        X, y = xor_data(200)
        model = SupportVectorMachine(kernel="gauss", C=4.0, sigma=2.0).fit(X, y)
        assert np.mean(model.predict(X) == y) > 0.9


class TestRandomForest:
    def test_refit_is_byte_identical(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(100, 3))
        y = (X[:, 0] > 0).astype(int)
        a = RandomForest(ntree=20, random_state=1).fit(X, y)
        b = RandomForest(ntree=20, random_state=1).fit(X, y)
        for name in ("tree_feature_", "tree_threshold_", "tree_left_", "tree_right_", "tree_value_"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()

    def test_fits_xor_where_linear_cannot(self):
        X, y = xor_data()
        rf = RandomForest(ntree=200, random_state=1).fit(X, y)
        lr = LogisticRegression().fit(X, y)
        assert np.mean(rf.predict(X) == y) >= 0.95
        assert np.mean(lr.predict(X) == y) <= 0.6

    def test_smaller_forest_is_a_prefix(self):
        X, y = noisy_linear(100, 3)
        big = RandomForest(ntree=300, random_state=5).fit(X, y)
        small = RandomForest(ntree=100, random_state=5).fit(X, y)
        np.testing.assert_array_equal(big.prefix_scores(X, [100])[100], small.fall_score(X))

    def test_seed_changes_forest(self):
        X, y = noisy_linear(100, 3)
        a = RandomForest(ntree=50, random_state=1).fit(X, y).fall_score(X)
        b = RandomForest(ntree=50, random_state=2).fit(X, y).fall_score(X)
        assert not np.array_equal(a, b)


class TestNeuralNet:
    def test_loss_never_increases(self):
        X, y = noisy_linear(200, 4)
        model = NeuralNet(size=5, decay=0.01, random_state=3).fit(X, y)
        assert np.all(np.diff(model.loss_curve_) <= 1e-12)
        assert model.loss_curve_[-1] < model.loss_curve_[0]

    def test_gradient_matches_finite_differences(self):
        X, y = noisy_linear(30, 3)
        net = NeuralNet(size=4, decay=0.1)
        w = net._init_weights(3)
        _, grad = net._loss_grad(w, X, y.astype(float))
        eps = 1e-6
        numeric = np.array([
            (net._loss_grad(w + eps * e, X, y)[0] - net._loss_grad(w - eps * e, X, y)[0]) / (2 * eps)
            for e in np.eye(w.size)
        ])
        np.testing.assert_allclose(grad, numeric, atol=1e-7)

    def test_average_is_mean_of_members(self):
        X, y = noisy_linear(80, 3)
        avg = AveragedNeuralNet(size=3, repeats=4, random_state=2).fit(X, y)
        members = np.mean([m.fall_score(X) for m in avg.estimators_], axis=0)
        np.testing.assert_allclose(avg.fall_score(X), members, atol=1e-15)
        assert len(set(avg.member_seeds())) == 4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["LogisticRegression", "LDA", "NaiveBayes", "SvmLinear"]))
def test_scores_bounded_on_random_data(seed, family):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3)) * rng.choice([1e-3, 1, 1e3])
    y = np.r_[np.zeros(15, int), np.ones(15, int)]
    s = fit(ModelSpec(family), X, y).fall_score(X)
    assert np.all(np.isfinite(s)) and np.all((s >= 0) & (s <= 1))
