"""The nine model families behind one estimator interface.

Every estimator follows the scikit-learn conventions (``fit`` returns self,
``get_params``/``set_params``, ``predict_proba``) and adds ``fall_score``,
the faller score in [0, 1]. ``ModelSpec`` names a family together with its
hyperparameters and seed; :func:`make_estimator` turns a spec into an
unfitted estimator.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..validation import check_threshold
from ._base import FallClassifier, MajorityClassifier
from .forest import RandomForest
from .linear import LinearDiscriminant, LogisticRegression
from .naive_bayes import NaiveBayes
from .neural import AveragedNeuralNet, NeuralNet
from .svm import SupportVectorMachine

__all__ = [
    "FAMILIES",
    "STOCHASTIC_FAMILIES",
    "ModelSpec",
    "FallClassifier",
    "MajorityClassifier",
    "LogisticRegression",
    "LinearDiscriminant",
    "NaiveBayes",
    "SupportVectorMachine",
    "RandomForest",
    "NeuralNet",
    "AveragedNeuralNet",
    "make_estimator",
    "fit",
    "score",
    "predict",
]

# family -> (declared hyperparameters with defaults)
FAMILIES: dict[str, dict[str, float]] = {
    "LogisticRegression": {},
    "LDA": {},
    "NaiveBayes": {},
    "SvmLinear": {"C": 1.0},
    "SvmGauss": {"C": 1.0, "sigma": 1.0},
    "RandomForest": {"ntree": 500},
    "NeuralNet": {"size": 5, "decay": 0.01},
    "AvNNet": {"size": 5, "decay": 0.01, "repeats": 5},
    "Majority": {},
}
STOCHASTIC_FAMILIES = frozenset({"RandomForest", "NeuralNet", "AvNNet"})

DISPLAY_NAMES = {
    "LogisticRegression": "Logistic Regression",
    "LDA": "Linear Discriminant Analysis",
    "NaiveBayes": "Naive Bayes",
    "SvmLinear": "SVM (Linear)",
    "SvmGauss": "SVM (Gauss)",
    "RandomForest": "Random Forest",
    "NeuralNet": "Neural Net",
    "AvNNet": "avNNet",
    "Majority": "Majority",
}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyperparameters: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        unknown = set(self.hyperparameters) - set(FAMILIES[self.family])
        if unknown:
            raise ValueError(f"{self.family} has no hyperparameters {sorted(unknown)}")
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))

    def params(self) -> dict[str, float]:
        """Declared defaults overridden by the spec's values."""
        out = dict(FAMILIES[self.family])
        out.update(self.hyperparameters)
        return out

    def with_params(self, **params) -> "ModelSpec":
        merged = dict(self.hyperparameters)
        merged.update(params)
        return replace(self, hyperparameters=merged)

    def with_seed(self, seed: int) -> "ModelSpec":
        return replace(self, seed=int(seed))


def make_estimator(spec: ModelSpec) -> FallClassifier:
    hp = spec.params()
    family = spec.family
    if family == "LogisticRegression":
        return LogisticRegression()
    if family == "LDA":
        return LinearDiscriminant()
    if family == "NaiveBayes":
        return NaiveBayes()
    if family == "SvmLinear":
        return SupportVectorMachine(kernel="linear", C=float(hp["C"]))
    if family == "SvmGauss":
        return SupportVectorMachine(kernel="gauss", C=float(hp["C"]), sigma=float(hp["sigma"]))
    if family == "RandomForest":
        return RandomForest(ntree=int(hp["ntree"]), random_state=spec.seed)
    if family == "NeuralNet":
        return NeuralNet(size=int(hp["size"]), decay=float(hp["decay"]), random_state=spec.seed)
    if family == "AvNNet":
        return AveragedNeuralNet(
            size=int(hp["size"]), decay=float(hp["decay"]), repeats=int(hp["repeats"]),
            random_state=spec.seed,
        )
    return MajorityClassifier()


def fit(spec: ModelSpec, X, y) -> FallClassifier:
    return make_estimator(spec).fit(X, y)


def score(model: FallClassifier, X) -> np.ndarray:
    """Faller scores for the rows of ``X`` (a single p-vector is one row)."""
    return model.fall_score(X)


def predict(model: FallClassifier, X, threshold: float = 0.5) -> np.ndarray:
    """1 (faller) iff the score exceeds ``threshold``."""
    return model.predict(X, check_threshold(threshold))
