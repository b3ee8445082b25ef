from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ..validation import check_fitted, check_labels, check_matrix


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-np.logaddexp(0.0, -z))


class FallClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier whose positive class (1) is "faller".

    Subclasses implement ``_fit(X, y)`` and ``_fall_score(X)``; the latter
    returns the faller score in [0, 1].
    """

    requires_both_classes = True

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_labels(y, X.shape[0], require_both=self.requires_both_classes)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        self._fit(X, y)
        return self

    def fall_score(self, X) -> np.ndarray:
        check_fitted(self, "n_features_in_")
        X = check_matrix(X, self.n_features_in_)
        return np.clip(self._fall_score(X), 0.0, 1.0)

    def predict_proba(self, X) -> np.ndarray:
        s = self.fall_score(X)
        return np.column_stack([1.0 - s, s])

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        """1 (faller) where the fall score exceeds ``threshold``."""
        return (self.fall_score(X) > threshold).astype(np.int64)

    def _fit(self, X, y):  # pragma: no cover - abstract
        raise NotImplementedError

    def _fall_score(self, X):  # pragma: no cover - abstract
        raise NotImplementedError


class MajorityClassifier(FallClassifier):
    """Always predicts non-faller, whatever the training data."""

    requires_both_classes = False

    def _fit(self, X, y):
        return self

    def _fall_score(self, X):
        return np.zeros(X.shape[0])
