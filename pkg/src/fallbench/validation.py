"""Input checks shared by the estimators and the evaluation harness."""
from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError


def check_matrix(X, n_features: int | None = None, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float array, optionally checking its width."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if n_features not in (None, 1) else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains missing or non-finite values")
    if n_features is not None and arr.shape[1] != n_features:
        raise ValueError(f"{name} has {arr.shape[1]} features, model was fitted with {n_features}")
    return arr


def check_labels(y, n_samples: int | None = None, require_both: bool = True) -> np.ndarray:
    """Binary labels as an int array of 0 (non-faller) and 1 (faller)."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        arr = arr.ravel()
    if n_samples is not None and arr.size != n_samples:
        raise ValueError(f"y has {arr.size} labels for {n_samples} rows")
    if not np.all(np.isin(arr, (0, 1))):
        raise ValueError("labels must be 0 (non-faller) or 1 (faller)")
    arr = arr.astype(np.int64)
    if require_both and (arr.min(initial=1) == arr.max(initial=0) or arr.size == 0):
        raise ValueError("training labels contain a single class")
    return arr


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet")


def check_threshold(threshold: float) -> float:
    t = float(threshold)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold {t} outside [0, 1]")
    return t
