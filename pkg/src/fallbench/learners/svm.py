"""Soft-margin C-SVC trained by sequential minimal optimisation.

The dual ``min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a <= C`` is solved by
pairwise coordinate updates with second-order working-set selection, until
the maximal KKT violation drops below ``tol``. Scores in [0, 1] come from a
logistic (Platt) link fitted on the training decision values.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..validation import check_matrix
from ._base import FallClassifier, sigmoid

TAU = 1e-12


@njit(cache=True)
def _smo(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.empty(n)
    for i in range(n):
        QD[i] = K[i, i]
    it = 0
    gap = np.inf
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if y[t] > 0:
                if alpha[t] > 0:
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    gd = gmax + G[t]
                    if gd > 0 and i >= 0:
                        q = QD[i] + QD[t] - 2.0 * y[i] * y[i] * y[t] * K[i, t]
                        if q <= 0:
                            q = TAU
                        od = -(gd * gd) / q
                        if od <= obj_min:
                            obj_min = od
                            j = t
            else:
                if alpha[t] < C:
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    gd = gmax - G[t]
                    if gd > 0 and i >= 0:
                        q = QD[i] + QD[t] + 2.0 * y[i] * y[i] * y[t] * K[i, t]
                        if q <= 0:
                            q = TAU
                        od = -(gd * gd) / q
                        if od <= obj_min:
                            obj_min = od
                            j = t
        gap = gmax + gmax2
        if gap < tol or j == -1 or i == -1:
            break
        it += 1
        Qij = y[i] * y[j] * K[i, j]
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            q = QD[i] + QD[j] + 2.0 * Qij
            if q <= 0:
                q = TAU
            delta = (-G[i] - G[j]) / q
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            q = QD[i] + QD[j] - 2.0 * Qij
            if q <= 0:
                q = TAU
            delta = (G[i] - G[j]) / q
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for t in range(n):
            G[t] += y[t] * (y[i] * K[i, t] * dai + y[j] * K[j, t] * daj)

    # offset rho, decision = sum a_i y_i K(x_i, x) - rho
    ub = np.inf
    lb = -np.inf
    n_free = 0
    sum_free = 0.0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            sum_free += yg
    if n_free > 0:
        rho = sum_free / n_free
    else:
        rho = 0.5 * (ub + lb)
    return alpha, rho, it, gap


def kkt_gap(K, y, alpha, C) -> float:
    """Maximal KKT violation m(a) - M(a) of a dual point (0 at optimum)."""
    G = (y[:, None] * y[None, :] * K) @ alpha - 1.0
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    score = -y * G
    if not up.any() or not low.any():
        return 0.0
    return float(score[up].max() - score[low].min())


def gaussian_kernel(A, B, sigma):
    """k(u, v) = exp(-sigma * |u - v|^2); sigma is an inverse width."""
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-sigma * np.maximum(sq, 0.0))


def fit_platt(f, y, max_iter=100):
    """Fit P(y=1|f) = 1 / (1 + exp(A f + B)) with Platt's smoothed targets.

    Newton iterations with backtracking on the regularised log-loss.
    """
    f = np.asarray(f, dtype=float)
    n_pos = float(np.sum(y == 1))
    n_neg = float(np.sum(y == 0))
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))

    def loss(a, b):
        z = a * f + b
        return float(np.sum(t * z + np.logaddexp(0.0, -z)))

    cur = loss(A, B)
    for _ in range(max_iter):
        z = A * f + B
        p = sigmoid(-z)  # model probability of the positive class
        d1 = t - p
        d2 = p * (1.0 - p)
        gA, gB = float(np.dot(f, d1)), float(np.sum(d1))
        if abs(gA) < 1e-5 and abs(gB) < 1e-5:
            break
        h11 = float(np.dot(f * f, d2)) + 1e-12
        h22 = float(np.sum(d2)) + 1e-12
        h21 = float(np.dot(f, d2))
        det = h11 * h22 - h21 * h21
        dA = -(h22 * gA - h21 * gB) / det
        dB = -(-h21 * gA + h11 * gB) / det
        gd = gA * dA + gB * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            new = loss(nA, nB)
            if new < cur + 1e-4 * step * gd:
                A, B, cur = nA, nB, new
                break
            step *= 0.5
        else:
            break
    return A, B


class SupportVectorMachine(FallClassifier):
    """C-SVC with a linear or Gaussian kernel.

    Parameters
    ----------
    kernel : {"linear", "gauss"}
    C : float
        Box constraint of the dual.
    sigma : float
        Inverse width of the Gaussian kernel ``exp(-sigma |u-v|^2)``.
    tol : float
        KKT tolerance of the solver.
    """

    def __init__(self, kernel="linear", C=1.0, sigma=1.0, tol=1e-3, max_iter=1_000_000):
        self.kernel = kernel
        self.C = C
        self.sigma = sigma
        self.tol = tol
        self.max_iter = max_iter

    def _kernel(self, A, B):
        if self.kernel == "linear":
            return A @ B.T
        if self.kernel == "gauss":
            return gaussian_kernel(A, B, self.sigma)
        raise ValueError(f"unknown kernel {self.kernel!r}")

    def _fit(self, X, y):
        ys = np.where(y == 1, 1.0, -1.0)
        K = np.ascontiguousarray(self._kernel(X, X))
        alpha, rho, n_iter, gap = _smo(K, ys, float(self.C), float(self.tol), int(self.max_iter))
        self.dual_coef_full_ = alpha * ys
        self.n_iter_ = int(n_iter)
        self.kkt_gap_ = float(gap) if np.isfinite(gap) else 0.0
        sv = alpha > 0
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = X[sv]
        self.dual_coef_ = (alpha * ys)[sv]
        self.alpha_ = alpha
        self.intercept_ = -float(rho)
        if self.kernel == "linear":
            self.coef_ = self.dual_coef_ @ self.support_vectors_ if sv.any() else np.zeros(X.shape[1])
        train_f = K @ (alpha * ys) - rho
        self.platt_ = fit_platt(train_f, y)
        return self

    def _decision(self, X):
        if self.kernel == "linear":
            return X @ self.coef_ + self.intercept_
        if self.support_.size == 0:
            return np.full(X.shape[0], self.intercept_)
        return self._kernel(X, self.support_vectors_) @ self.dual_coef_ + self.intercept_

    def decision_function(self, X):
        X = check_matrix(X, self.n_features_in_)
        return self._decision(X)

    def _fall_score(self, X):
        A, B = self.platt_
        return sigmoid(-(A * self._decision(X) + B))
