from __future__ import annotations

import numpy as np

from ._base import FallClassifier, sigmoid


class NeuralNet(FallClassifier):
    """Single-hidden-layer network of logistic units.

    Minimises the mean cross-entropy plus ``decay * sum(w**2) / n`` (all
    weights and biases) with BFGS and a backtracking line search, starting
    from a seeded uniform(-0.5, 0.5) initialisation. ``loss_curve_`` records
    the objective after each accepted step and never increases.
    """

    def __init__(self, size=5, decay=0.01, max_iter=100, tol=1e-8, random_state=0):
        self.size = size
        self.decay = decay
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _shapes(self, p):
        h = self.size
        return [(p, h), (h,), (h,), ()]

    def _unpack(self, w, p):
        out, at = [], 0
        for shape in self._shapes(p):
            size = int(np.prod(shape)) if shape else 1
            chunk = w[at:at + size]
            out.append(chunk.reshape(shape) if shape else chunk[0])
            at += size
        return out

    def _init_weights(self, p):
        rng = np.random.default_rng(self.random_state)
        n_weights = sum(int(np.prod(s)) if s else 1 for s in self._shapes(p))
        return rng.uniform(-0.5, 0.5, size=n_weights)

    def _loss_grad(self, w, X, y):
        n, p = X.shape
        W1, b1, W2, b2 = self._unpack(w, p)
        H = sigmoid(X @ W1 + b1)
        z = H @ W2 + b2
        loss = np.mean(np.logaddexp(0.0, z) - y * z) + self.decay * np.dot(w, w) / n
        d_out = (sigmoid(z) - y) / n
        d_hidden = np.outer(d_out, W2) * H * (1.0 - H)
        grad = np.concatenate(
            [(X.T @ d_hidden).ravel(), d_hidden.sum(axis=0), H.T @ d_out, [d_out.sum()]]
        )
        grad += 2.0 * self.decay / n * w
        return float(loss), grad

    def _fit(self, X, y):
        yf = y.astype(float)
        w = self._init_weights(X.shape[1])
        loss, grad = self._loss_grad(w, X, yf)
        Hinv = np.eye(w.size)
        losses = [loss]
        for _ in range(self.max_iter):
            if np.max(np.abs(grad)) < self.tol:
                break
            direction = -Hinv @ grad
            slope = float(grad @ direction)
            if slope >= 0:
                Hinv = np.eye(w.size)
                direction, slope = -grad, -float(grad @ grad)
            step = 1.0
            while step > 1e-12:
                w_new = w + step * direction
                new_loss, new_grad = self._loss_grad(w_new, X, yf)
                if new_loss <= loss + 1e-4 * step * slope:
                    break
                step *= 0.5
            else:
                break
            s, g = w_new - w, new_grad - grad
            sy = float(s @ g)
            if sy > 1e-12:
                rho = 1.0 / sy
                V = np.eye(w.size) - rho * np.outer(s, g)
                Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
            w, loss, grad = w_new, new_loss, new_grad
            losses.append(loss)
        W1, b1, W2, b2 = self._unpack(w, X.shape[1])
        self.W1_, self.b1_, self.W2_, self.b2_ = W1, b1, W2, float(b2)
        self.n_iter_ = len(losses) - 1
        self.loss_curve_ = np.array(losses)
        return self

    def loss(self, X, y) -> float:
        """Training objective at the fitted weights."""
        w = np.concatenate([self.W1_.ravel(), self.b1_, self.W2_, [self.b2_]])
        return self._loss_grad(w, np.asarray(X, dtype=float), np.asarray(y, dtype=float))[0]

    def _fall_score(self, X):
        H = sigmoid(X @ self.W1_ + self.b1_)
        return sigmoid(H @ self.W2_ + self.b2_)


class AveragedNeuralNet(FallClassifier):
    """Mean score of ``repeats`` networks with seeds derived from ``random_state``."""

    def __init__(self, size=5, decay=0.01, repeats=5, max_iter=100, random_state=0):
        self.size = size
        self.decay = decay
        self.repeats = repeats
        self.max_iter = max_iter
        self.random_state = random_state

    def member_seeds(self) -> list[int]:
        seq = np.random.SeedSequence(int(self.random_state))
        return [int(s) for s in seq.generate_state(self.repeats)]

    def _fit(self, X, y):
        self.estimators_ = [
            NeuralNet(
                size=self.size,
                decay=self.decay,
                max_iter=self.max_iter,
                random_state=seed,
            ).fit(X, y)
            for seed in self.member_seeds()
        ]
        return self

    def _fall_score(self, X):
        scores = np.column_stack([m._fall_score(X) for m in self.estimators_])
        return scores.sum(axis=1) / len(self.estimators_)
