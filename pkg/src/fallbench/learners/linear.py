"""Logistic regression and linear discriminant analysis."""
from __future__ import annotations

import warnings

import numpy as np

from ..validation import check_matrix
from ._base import FallClassifier, sigmoid


class LogisticRegression(FallClassifier):
    """Maximum-likelihood logistic regression fitted by damped Newton (IRLS).

    If the unpenalised fit diverges (coefficient norm above
    ``separation_norm``, as happens under complete separation) or the Hessian
    is singular, the fit restarts with a ridge penalty ``ridge`` on the
    slopes. The intercept is never penalised.
    """

    def __init__(self, tol=1e-8, max_iter=100, ridge=1e-6, separation_norm=1e3):
        self.tol = tol
        self.max_iter = max_iter
        self.ridge = ridge
        self.separation_norm = separation_norm

    def _fit(self, X, y):
        Z = np.column_stack([np.ones(X.shape[0]), X])
        try:
            beta, converged = self._newton(Z, y, penalty=0.0)
        except (np.linalg.LinAlgError, OverflowError):
            beta, converged = None, False
        self.penalty_ = 0.0
        if beta is None or np.linalg.norm(beta) > self.separation_norm or not converged:
            beta, converged = self._newton(Z, y, penalty=self.ridge)
            self.penalty_ = self.ridge
        if not converged:
            warnings.warn("logistic regression did not converge", RuntimeWarning, stacklevel=3)
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:].copy()
        return self

    def _objective(self, Z, y, beta, penalty):
        eta = Z @ beta
        ll = np.sum(y * eta - np.logaddexp(0.0, eta))
        return -ll + 0.5 * penalty * np.dot(beta[1:], beta[1:])

    def _gradient(self, Z, y, beta, penalty):
        g = Z.T @ (sigmoid(Z @ beta) - y)
        g[1:] += penalty * beta[1:]
        return g

    def _newton(self, Z, y, penalty):
        p = Z.shape[1]
        beta = np.zeros(p)
        reg = np.full(p, penalty)
        reg[0] = 0.0
        obj = self._objective(Z, y, beta, penalty)
        for _ in range(self.max_iter):
            mu = sigmoid(Z @ beta)
            grad = self._gradient(Z, y, beta, penalty)
            if np.max(np.abs(grad)) < self.tol:
                return beta, True
            w = mu * (1.0 - mu)
            H = (Z * w[:, None]).T @ Z + np.diag(reg)
            step = np.linalg.solve(H, grad)
            t = 1.0
            while True:
                cand = beta - t * step
                cand_obj = self._objective(Z, y, cand, penalty)
                if cand_obj <= obj + 1e-4 * t * np.dot(grad, -step) or t < 1e-10:
                    break
                t *= 0.5
            beta, obj = cand, cand_obj
            if penalty == 0.0 and np.linalg.norm(beta) > self.separation_norm:
                return beta, False
            if np.max(np.abs(t * step)) < self.tol:
                return beta, True
        grad = self._gradient(Z, y, beta, penalty)
        return beta, bool(np.max(np.abs(grad)) < 1e-6)

    def decision_function(self, X):
        X = check_matrix(X, self.n_features_in_)
        return X @ self.coef_ + self.intercept_

    def _fall_score(self, X):
        return sigmoid(X @ self.coef_ + self.intercept_)


class LinearDiscriminant(FallClassifier):
    """Two-class LDA with a pooled covariance and Gaussian class posteriors."""

    def __init__(self, shrink_factor=1e-6, condition_limit=1e12):
        self.shrink_factor = shrink_factor
        self.condition_limit = condition_limit

    def _fit(self, X, y):
        n, p = X.shape
        X0, X1 = X[y == 0], X[y == 1]
        mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
        resid = np.vstack([X0 - mu0, X1 - mu1])
        dof = max(n - 2, 1)
        S = resid.T @ resid / dof
        eig = np.linalg.eigvalsh(S)
        self.regularized_ = bool(eig[0] <= 0 or eig[-1] / max(eig[0], 1e-300) > self.condition_limit)
        if self.regularized_:
            tr = np.trace(S)
            delta = self.shrink_factor * (tr / p if tr > 0 else 1.0)
            S = S + delta * np.eye(p)
        self.covariance_ = S
        self.means_ = np.vstack([mu0, mu1])
        self.priors_ = np.array([X0.shape[0], X1.shape[0]], dtype=float) / n
        w = np.linalg.solve(S, mu1 - mu0)
        self.coef_ = w
        self.intercept_ = float(-0.5 * w @ (mu0 + mu1) + np.log(self.priors_[1] / self.priors_[0]))
        return self

    def _fall_score(self, X):
        return sigmoid(X @ self.coef_ + self.intercept_)
