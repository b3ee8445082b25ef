import numpy as np
import pytest

from fallbench.cohort import builtin_variable_sets
from fallbench.pipeline import PredictionSet, stratified_assignment
from fallbench.synth import default_cohort_spec, generate_cohort


@pytest.fixture(scope="session")
def default_cohort():
    return generate_cohort(default_cohort_spec())


@pytest.fixture(scope="session")
def variable_sets():
    return builtin_variable_sets()


def make_predictions(y, scores, k=5, seed=0, threshold=0.5, fallback=None, label="s"):
    """PredictionSet built directly from labels and scores."""
    y = np.asarray(y, dtype=np.int64)
    scores = np.asarray(scores, dtype=float)
    folds = stratified_assignment(y, k, seed)
    fallback = np.zeros(y.size, bool) if fallback is None else np.asarray(fallback, bool)
    predicted = np.where(fallback, 0, scores > threshold).astype(np.int64)
    return PredictionSet(
        label=label,
        population="test",
        ids=tuple(f"p{i}" for i in range(y.size)),
        folds=folds,
        y_true=y,
        scores=scores,
        predicted=predicted,
        fallback_used=fallback,
        threshold=threshold,
        k=k,
    )
