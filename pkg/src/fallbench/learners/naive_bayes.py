from __future__ import annotations

import numpy as np

from ._base import FallClassifier, sigmoid


class NaiveBayes(FallClassifier):
    """Naive Bayes with Gaussian continuous features and Bernoulli binary ones.

    A column is treated as binary when it takes at most two distinct values
    in the training data (0/1 answers remain two-valued after
    standardisation). Binary columns use Laplace +1 smoothing; Gaussian
    variances are floored at ``var_floor``.
    """

    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def _fit(self, X, y):
        n, p = X.shape
        self.binary_ = np.zeros(p, dtype=bool)
        self.cut_ = np.zeros(p)
        for j in range(p):
            values = np.unique(X[:, j])
            if values.size <= 2:
                self.binary_[j] = True
                self.cut_[j] = values.mean() if values.size == 2 else values[0]
        counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=float)
        self.class_log_prior_ = np.log(counts / n)
        self.theta_ = np.zeros((2, p))
        self.var_ = np.ones((2, p))
        self.bernoulli_p_ = np.full((2, p), 0.5)
        for c in (0, 1):
            Xc = X[y == c]
            self.theta_[c] = Xc.mean(axis=0)
            self.var_[c] = np.maximum(Xc.var(axis=0), self.var_floor)
            ones = (Xc > self.cut_).sum(axis=0)
            self.bernoulli_p_[c] = (ones + 1.0) / (Xc.shape[0] + 2.0)
        return self

    def joint_log_likelihood(self, X) -> np.ndarray:
        out = np.tile(self.class_log_prior_, (X.shape[0], 1))
        cont = ~self.binary_
        for c in (0, 1):
            if cont.any():
                mu, var = self.theta_[c, cont], self.var_[c, cont]
                diff = X[:, cont] - mu
                out[:, c] += np.sum(-0.5 * np.log(2 * np.pi * var) - 0.5 * diff**2 / var, axis=1)
            if self.binary_.any():
                ind = X[:, self.binary_] > self.cut_[self.binary_]
                pc = self.bernoulli_p_[c, self.binary_]
                out[:, c] += np.sum(np.where(ind, np.log(pc), np.log1p(-pc)), axis=1)
        return out

    def _fall_score(self, X):
        jll = self.joint_log_likelihood(X)
        return sigmoid(jll[:, 1] - jll[:, 0])
