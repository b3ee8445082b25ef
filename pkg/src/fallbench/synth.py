"""Seeded synthetic cohorts matched to published per-class quantiles.

Continuous variables are drawn through a piecewise-linear inverse CDF whose
knots are the class's (min, q1, median, q3, max); binary variables are
Bernoulli with the class's rate. Each test group is present or missing as a
block, independently of the values (MCAR), with a class-specific
availability.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .cohort import Cohort, cohort_from_arrays
from .stats import SixNumberSummary

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"
CLASSES = ("faller", "non_faller")
KNOT_PROBS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
DECIMALS = 2


class SpecError(ValueError):
    """A cohort specification is malformed."""


@dataclass(frozen=True)
class VariableModel:
    name: str
    group: str
    kind: str
    faller: SixNumberSummary | float
    non_faller: SixNumberSummary | float
    integer: bool = False

    def __post_init__(self):
        if self.kind == CONTINUOUS:
            for side in (self.faller, self.non_faller):
                if not isinstance(side, SixNumberSummary):
                    raise SpecError(f"{self.name}: continuous variables need six-number summaries")
        elif self.kind == BINARY:
            for side in (self.faller, self.non_faller):
                if not 0.0 <= float(side) <= 1.0:
                    raise SpecError(f"{self.name}: probability {side} outside [0, 1]")
        else:
            raise SpecError(f"{self.name}: unknown kind {self.kind!r}")

    def for_class(self, is_faller: bool):
        return self.faller if is_faller else self.non_faller


@dataclass(frozen=True)
class CohortSpec:
    n_total: int
    n_fallers: int
    variables: tuple[VariableModel, ...]
    missingness: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    seed: int = 0
    copula_rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not 0 <= self.n_fallers <= self.n_total:
            raise SpecError("need 0 <= n_fallers <= n_total")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SpecError("duplicate variable names")
        for group, rates in self.missingness.items():
            for cls in CLASSES:
                if not 0.0 <= float(rates.get(cls, 1.0)) <= 1.0:
                    raise SpecError(f"availability of {group} for {cls} outside [0, 1]")
        if not 0.0 <= self.copula_rho < 1.0:
            raise SpecError("copula_rho must lie in [0, 1)")

    @property
    def groups(self) -> dict[str, list[VariableModel]]:
        out: dict[str, list[VariableModel]] = {}
        for v in self.variables:
            out.setdefault(v.group, []).append(v)
        return out

    def availability(self, group: str, is_faller: bool) -> float:
        rates = self.missingness.get(group, {})
        return float(rates.get("faller" if is_faller else "non_faller", 1.0))

    def variable(self, name: str) -> VariableModel:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps(spec_to_dict(self), indent=1)


# --------------------------------------------------------------------------
# serialization


def _summary(values, name) -> SixNumberSummary:
    try:
        return SixNumberSummary(*(float(x) for x in values))
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{name}: {exc}") from None


def spec_from_dict(data: Mapping) -> CohortSpec:
    try:
        variables = []
        for item in data["variables"]:
            kind = item.get("kind", CONTINUOUS)
            if kind == CONTINUOUS:
                f = _summary(item["faller"], item["name"])
                nf = _summary(item["non_faller"], item["name"])
            else:
                f, nf = float(item["faller"]), float(item["non_faller"])
            variables.append(
                VariableModel(item["name"], item["group"], kind, f, nf, bool(item.get("integer", False)))
            )
        return CohortSpec(
            n_total=int(data["n_total"]),
            n_fallers=int(data["n_fallers"]),
            variables=tuple(variables),
            missingness={g: dict(r) for g, r in data.get("missingness", {}).items()},
            seed=int(data.get("seed", 0)),
            copula_rho=float(data.get("copula_rho", 0.0)),
        )
    except KeyError as exc:
        raise SpecError(f"cohort spec is missing field {exc}") from None
    except TypeError as exc:
        raise SpecError(f"malformed cohort spec: {exc}") from None


def spec_to_dict(spec: CohortSpec) -> dict:
    variables = []
    for v in spec.variables:
        item = {"name": v.name, "group": v.group, "kind": v.kind}
        if v.kind == CONTINUOUS:
            item["integer"] = v.integer
            item["faller"] = list(v.faller.as_tuple())
            item["non_faller"] = list(v.non_faller.as_tuple())
        else:
            item["faller"] = float(v.faller)
            item["non_faller"] = float(v.non_faller)
        variables.append(item)
    return {
        "n_total": spec.n_total,
        "n_fallers": spec.n_fallers,
        "seed": spec.seed,
        "copula_rho": spec.copula_rho,
        "missingness": {g: dict(r) for g, r in spec.missingness.items()},
        "variables": variables,
    }


def load_spec(path) -> CohortSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read cohort spec {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"cohort spec {path} is not valid JSON: {exc}") from None
    return spec_from_dict(data)


def default_cohort_spec() -> CohortSpec:
    """338 patients (54 fallers) with the published per-class summaries."""
    text = resources.files("fallbench.data").joinpath("default_cohort_spec.json").read_text()
    return spec_from_dict(json.loads(text))


# --------------------------------------------------------------------------
# sampling


def quantile_sampler(summary: SixNumberSummary) -> Callable[[np.ndarray | float], np.ndarray]:
    """Inverse CDF interpolating linearly between the five quantile knots."""
    knots = np.asarray(summary.knots, dtype=float)

    def sample(u):
        return np.interp(u, KNOT_PROBS, knots)

    return sample


def sampler_mean(summary: SixNumberSummary) -> float:
    """Mean of the piecewise-linear distribution through the knots."""
    lo, q1, med, q3, hi = summary.knots
    return (lo + 2 * q1 + 2 * med + 2 * q3 + hi) / 8.0


def mean_residuals(spec: CohortSpec) -> dict[str, tuple[float, float]]:
    """Sampler mean minus the published mean, per class, for continuous variables."""
    out = {}
    for v in spec.variables:
        if v.kind == CONTINUOUS:
            out[v.name] = (
                sampler_mean(v.faller) - v.faller.mean,
                sampler_mean(v.non_faller) - v.non_faller.mean,
            )
    return out


def _uniforms(rng: np.random.Generator, n: int, p: int, rho: float) -> np.ndarray:
    """Stratified uniforms: each column puts one draw in each of n equal strata.

    Stratification keeps the empirical quartiles of every variable close to
    its knots even where the inverse CDF is steep. Strata are matched to
    records through the ranks of Gaussian scores, equicorrelated when
    ``rho > 0`` (a Gaussian copula on the ranks).
    """
    if n == 0:
        return np.empty((0, p))
    if rho == 0.0 or p == 1:
        ranks = np.column_stack([rng.permutation(n) for _ in range(p)]) if p else np.empty((n, 0), int)
    else:
        shared = rng.standard_normal((n, 1))
        own = rng.standard_normal((n, p))
        z = math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * own
        ranks = np.argsort(np.argsort(z, axis=0, kind="stable"), axis=0, kind="stable")
    return (ranks + rng.random((n, p))) / n


def _draw_class(spec: CohortSpec, rng, n: int, is_faller: bool, names: Sequence[str]) -> np.ndarray:
    X = np.empty((n, len(names)))
    col = {name: j for j, name in enumerate(names)}
    for group, models in spec.groups.items():
        U = _uniforms(rng, n, len(models), spec.copula_rho)
        for j, v in enumerate(models):
            params = v.for_class(is_faller)
            if v.kind == BINARY:
                values = (U[:, j] < float(params)).astype(float)
            else:
                values = quantile_sampler(params)(U[:, j])
                if v.integer:
                    values = np.floor(values + 0.5)
                values = np.clip(values, params.min, params.max)
            X[:, col[v.name]] = values
        present = rng.random(n) < spec.availability(group, is_faller)
        for v in models:
            X[~present, col[v.name]] = np.nan
    return X


def generate_cohort(spec: CohortSpec, seed: int | None = None) -> Cohort:
    """Draw a cohort; identical (spec, seed) gives an identical cohort."""
    seed = spec.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    names = [v.name for v in spec.variables]
    n_f = spec.n_fallers
    n_nf = spec.n_total - n_f
    X = np.vstack(
        [_draw_class(spec, rng, n_f, True, names), _draw_class(spec, rng, n_nf, False, names)]
    )
    integer = np.array([v.kind == BINARY or v.integer for v in spec.variables])
    X[:, ~integer] = np.round(X[:, ~integer], DECIMALS)
    y = np.r_[np.ones(n_f, dtype=np.int64), np.zeros(n_nf, dtype=np.int64)]
    order = rng.permutation(spec.n_total)
    width = max(4, len(str(spec.n_total)))
    ids = [f"P{i + 1:0{width}d}" for i in range(spec.n_total)]
    for name, (rf, rnf) in mean_residuals(spec).items():
        log.debug("mean residual %s: faller %+.3f, non-faller %+.3f", name, rf, rnf)
    return cohort_from_arrays(
        ids, y[order], X[order], names, {v.name: v.group for v in spec.variables}
    )
