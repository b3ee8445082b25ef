"""Patient cohorts, variable sets and the cohort CSV format."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

FALLER = "faller"
NON_FALLER = "non_faller"
OUTCOMES = (FALLER, NON_FALLER)
MISSING_TOKENS = ("", "NA")
UNGROUPED = "Ungrouped"


class CohortError(ValueError):
    """Invalid cohort data or an empty evaluation population."""


class CohortParseError(CohortError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class PatientRecord:
    id: str
    outcome: str
    features: Mapping[str, float | None]

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise CohortError(f"unknown outcome {self.outcome!r} for patient {self.id!r}")

    @property
    def is_faller(self) -> bool:
        return self.outcome == FALLER


@dataclass(frozen=True)
class VariableSet:
    name: str
    variables: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise CohortError(f"variable set {self.name!r} is empty")
        if len(set(self.variables)) != len(self.variables):
            raise CohortError(f"variable set {self.name!r} repeats a variable")

    def union(self, other: "VariableSet", name: str | None = None) -> "VariableSet":
        merged = list(self.variables) + [v for v in other.variables if v not in self.variables]
        return VariableSet(name or f"{self.name}+{other.name}", tuple(merged))


def completeness(record: PatientRecord, vs: VariableSet) -> bool:
    """True iff the record has a value for every variable of ``vs``."""
    return all(record.features.get(v) is not None for v in vs.variables)


@dataclass(frozen=True, eq=False)
class Cohort:
    """An immutable list of patient records sharing one variable schema."""

    records: tuple[PatientRecord, ...]
    schema: tuple[str, ...]
    group_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "schema", tuple(self.schema))
        groups = {v: self.group_map.get(v, UNGROUPED) for v in self.schema}
        object.__setattr__(self, "group_map", groups)
        keys = set(self.schema)
        seen = set()
        for rec in self.records:
            if set(rec.features) != keys:
                raise CohortError(f"patient {rec.id!r} does not match the cohort schema")
            if rec.id in seen:
                raise CohortError(f"duplicate patient id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cohort):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.group_map == other.group_map
            and self.records == other.records
        )

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    @cached_property
    def y(self) -> np.ndarray:
        """Outcome vector, 1 for faller."""
        return np.array([r.is_faller for r in self.records], dtype=np.int64)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Feature matrix in schema order with NaN for missing values."""
        out = np.full((len(self.records), len(self.schema)), np.nan)
        for i, rec in enumerate(self.records):
            for j, name in enumerate(self.schema):
                value = rec.features[name]
                if value is not None:
                    out[i, j] = value
        out.setflags(write=False)
        return out

    @property
    def prevalence(self) -> float:
        if not self.records:
            return 0.0
        return float(self.y.sum()) / len(self.records)

    @property
    def n_fallers(self) -> int:
        return int(self.y.sum())

    def groups(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for v in self.schema:
            out.setdefault(self.group_map[v], []).append(v)
        return out

    def check_variable_set(self, vs: VariableSet) -> None:
        unknown = [v for v in vs.variables if v not in self.group_map]
        if unknown:
            raise CohortError(f"variable set {vs.name!r} names unknown variables {unknown}")

    def columns(self, vs: VariableSet) -> np.ndarray:
        self.check_variable_set(vs)
        idx = [self.schema.index(v) for v in vs.variables]
        return self.matrix[:, idx]

    def complete_mask(self, vs: VariableSet) -> np.ndarray:
        return ~np.isnan(self.columns(vs)).any(axis=1)

    def subset(self, mask: Sequence[bool] | np.ndarray) -> "Cohort":
        keep = [r for r, m in zip(self.records, mask) if m]
        return Cohort(tuple(keep), self.schema, self.group_map)


def select_complete(cohort: Cohort, vs: VariableSet) -> Cohort:
    """Sub-cohort of records with no missing value among ``vs`` (order kept)."""
    mask = cohort.complete_mask(vs)
    if not mask.any():
        raise CohortError(f"no patient has complete data for variable set {vs.name!r}")
    return cohort.subset(mask)


# --------------------------------------------------------------------------
# CSV


def _parse_value(cell: str, row: int, column: str) -> float | None:
    cell = cell.strip()
    if cell in MISSING_TOKENS:
        return None
    try:
        value = float(cell)
    except ValueError:
        raise CohortParseError(f"malformed number {cell!r}", row, column) from None
    if not math.isfinite(value):
        raise CohortParseError(f"non-finite number {cell!r}", row, column)
    return value


def parse_cohort(
    csv_text: str | io.TextIOBase,
    group_map: Mapping[str, str] | None = None,
) -> Cohort:
    """Parse the cohort CSV (``patient_id,outcome,<variables...>``).

    Row numbers in error messages count the header as row 1.
    """
    if group_map is None:
        group_map = default_group_map()
    stream = io.StringIO(csv_text) if isinstance(csv_text, str) else csv_text
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CohortParseError("empty file: header row missing") from None
    if header[:2] != ["patient_id", "outcome"]:
        raise CohortParseError("header must start with 'patient_id,outcome'", 1)
    variables = header[2:]
    if len(set(variables)) != len(variables):
        raise CohortParseError("duplicate variable column in header", 1)

    records = []
    seen = set()
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CohortParseError(f"expected {len(header)} cells, found {len(row)}", row_no)
        pid, outcome = row[0].strip(), row[1].strip()
        if not pid:
            raise CohortParseError("empty patient_id", row_no, "patient_id")
        if pid in seen:
            raise CohortParseError(f"duplicate patient_id {pid!r}", row_no, "patient_id")
        seen.add(pid)
        if outcome not in OUTCOMES:
            raise CohortParseError(f"unknown outcome {outcome!r}", row_no, "outcome")
        feats = {name: _parse_value(cell, row_no, name) for name, cell in zip(variables, row[2:])}
        records.append(PatientRecord(pid, outcome, feats))
    return Cohort(tuple(records), tuple(variables), dict(group_map))


def read_cohort(path, group_map: Mapping[str, str] | None = None) -> Cohort:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_cohort(fh.read(), group_map)


def format_number(value: float) -> str:
    """Shortest text that parses back to exactly ``value``."""
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def cohort_to_csv(cohort: Cohort) -> str:
    lines = [",".join(("patient_id", "outcome") + cohort.schema)]
    for rec in cohort.records:
        cells = [rec.id, rec.outcome]
        for name in cohort.schema:
            v = rec.features[name]
            cells.append("" if v is None else format_number(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_cohort(cohort: Cohort, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(cohort_to_csv(cohort))


# --------------------------------------------------------------------------
# variable-set configuration


def load_variable_set_config(source: str | Mapping | None = None) -> dict:
    """Load a ``{"groups": ..., "sets": ...}`` mapping.

    ``source`` may be a mapping, a JSON file path, or None for the shipped
    defaults.
    """
    if source is None:
        text = resources.files("fallbench").joinpath("data/variable_sets.json").read_text()
        return json.loads(text)
    if isinstance(source, Mapping):
        return dict(source)
    with open(source, encoding="utf-8") as fh:
        return json.load(fh)


def default_group_map() -> dict[str, str]:
    cfg = load_variable_set_config()
    return {v: g for g, members in cfg["groups"].items() for v in members}


def build_variable_sets(config: Mapping | None = None) -> dict[str, VariableSet]:
    """Resolve named sets; members may be group names or variable names."""
    cfg = load_variable_set_config(config)
    groups = cfg.get("groups", {})
    sets = {}
    for name, members in cfg.get("sets", {}).items():
        variables: list[str] = []
        for m in members:
            for v in groups.get(m, [m]):
                if v not in variables:
                    variables.append(v)
        sets[name] = VariableSet(name, tuple(variables))
    return sets


def builtin_variable_sets() -> dict[str, VariableSet]:
    return build_variable_sets(None)


def cohort_from_arrays(
    ids: Iterable[str],
    y: Iterable[int],
    X: np.ndarray,
    variables: Sequence[str],
    group_map: Mapping[str, str] | None = None,
) -> Cohort:
    """Build a cohort from a label vector and a NaN-for-missing matrix."""
    X = np.asarray(X, dtype=float)
    records = []
    for pid, label, row in zip(ids, y, X):
        feats = {v: (None if np.isnan(x) else float(x)) for v, x in zip(variables, row)}
        records.append(PatientRecord(str(pid), FALLER if label else NON_FALLER, feats))
    return Cohort(tuple(records), tuple(variables), dict(group_map or {}))
