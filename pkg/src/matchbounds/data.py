"""Dataset ingestion, match-assignment bookkeeping, and the two estimators.

A :class:`Dataset` is an immutable treated/control sample. A
:class:`MatchAssignment` is a binary match matrix stored as sparse
(treated, control) pairs; each pair carries weight one and a control may
appear in pairs with several treated units (matching with replacement).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EstimandUndefinedError,
    ParseError,
    SchemaError,
    ValidationError,
)


@dataclass(frozen=True)
class Unit:
    """One observation.

    Attributes:
        id: Stable identifier used in reports and diffs.
        outcome: Observed outcome value.
        treated: Arm indicator, 1 for treated and 0 for control.
        covariates: Covariate row, one finite float per mapped column.
        score: Optional precomputed score (e.g. a propensity score).
    """

    id: str
    outcome: float
    treated: int
    covariates: tuple[float, ...]
    score: float | None = None


@dataclass(frozen=True)
class ColumnSchema:
    """Column mapping for :func:`load_dataset`.

    Attributes:
        outcome: Outcome column name.
        treatment: Treatment indicator column name (values must be 0 or 1).
        covariates: Covariate column names, in order.
        id: Optional id column; row numbers are used when absent.
        score: Optional precomputed score column.
    """

    outcome: str
    treatment: str
    covariates: tuple[str, ...]
    id: str | None = None
    score: str | None = None


class Dataset:
    """Treated/control sample with covariate matrices split by arm.

    Within each arm, row order follows construction order; treated index i
    and control index j used throughout the package refer to these rows.
    Arrays are read-only views.
    """

    def __init__(self, units: Sequence[Unit], covariate_names: Sequence[str]):
        units = tuple(units)
        names = tuple(covariate_names)
        if not units:
            raise ValidationError("dataset has no units")
        p = len(names)
        for u in units:
            if len(u.covariates) != p:
                raise ValidationError(
                    f"unit {u.id!r} has {len(u.covariates)} covariates, expected {p}"
                )
            if u.treated not in (0, 1):
                raise ValidationError(
                    f"unit {u.id!r} has treatment value {u.treated!r}, expected 0 or 1"
                )
            for k, v in enumerate(u.covariates):
                if not math.isfinite(v):
                    raise ValidationError(
                        f"unit {u.id!r} covariate {names[k]!r} is not finite"
                    )
            if not math.isfinite(u.outcome):
                raise ValidationError(f"unit {u.id!r} outcome is not finite")
        seen: set[str] = set()
        for u in units:
            if u.id in seen:
                raise ValidationError(f"duplicate unit id {u.id!r}")
            seen.add(u.id)

        self._units = units
        self._covariate_names = names
        t_units = [u for u in units if u.treated == 1]
        c_units = [u for u in units if u.treated == 0]
        if not t_units:
            raise ValidationError("dataset has no treated units")
        if not c_units:
            raise ValidationError("dataset has no control units")

        def _pack(arm: list[Unit]) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
            y = np.array([u.outcome for u in arm], dtype=float)
            x = np.array([u.covariates for u in arm], dtype=float).reshape(len(arm), p)
            ids = tuple(u.id for u in arm)
            y.setflags(write=False)
            x.setflags(write=False)
            return y, x, ids

        self._y_t, self._x_t, self._ids_t = _pack(t_units)
        self._y_c, self._x_c, self._ids_c = _pack(c_units)
        if all(u.score is not None for u in units):
            st = np.array([u.score for u in t_units], dtype=float)
            sc = np.array([u.score for u in c_units], dtype=float)
            st.setflags(write=False)
            sc.setflags(write=False)
            self._score_t: np.ndarray | None = st
            self._score_c: np.ndarray | None = sc
        else:
            self._score_t = None
            self._score_c = None

    @property
    def units(self) -> tuple[Unit, ...]:
        return self._units

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self._covariate_names

    @property
    def n_covariates(self) -> int:
        return len(self._covariate_names)

    @property
    def n_treated(self) -> int:
        return len(self._ids_t)

    @property
    def n_control(self) -> int:
        return len(self._ids_c)

    @property
    def y_treated(self) -> np.ndarray:
        return self._y_t

    @property
    def y_control(self) -> np.ndarray:
        return self._y_c

    @property
    def x_treated(self) -> np.ndarray:
        return self._x_t

    @property
    def x_control(self) -> np.ndarray:
        return self._x_c

    @property
    def treated_ids(self) -> tuple[str, ...]:
        return self._ids_t

    @property
    def control_ids(self) -> tuple[str, ...]:
        return self._ids_c

    @property
    def has_scores(self) -> bool:
        return self._score_t is not None

    @property
    def score_treated(self) -> np.ndarray:
        if self._score_t is None:
            raise ValidationError("dataset has no score column mapped")
        return self._score_t

    @property
    def score_control(self) -> np.ndarray:
        if self._score_c is None:
            raise ValidationError("dataset has no score column mapped")
        return self._score_c


def _parse_cell(raw: str, row: int, column: str) -> float:
    text = raw.strip()
    if text == "":
        raise ParseError(f"row {row}, column {column!r}: missing value")
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"row {row}, column {column!r}: could not parse {raw!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {column!r}: value {raw!r} is not finite")
    return value


def load_dataset(path: str, schema: ColumnSchema) -> Dataset:
    """Load a CSV file into a :class:`Dataset` under a column mapping.

    Args:
        path: CSV file with a header row.
        schema: Column mapping; all mapped columns must exist.

    Returns:
        The loaded dataset.

    Raises:
        SchemaError: A mapped column is absent from the header.
        ParseError: A cell is missing or not a finite number (message
            names the 1-based data row and the column).
        ValidationError: A treatment value is not 0 or 1, an arm is
            empty, or ids collide.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        index: dict[str, int] = {}
        for pos, name in enumerate(header):
            index.setdefault(name, pos)

        wanted = [schema.outcome, schema.treatment, *schema.covariates]
        if schema.id is not None:
            wanted.append(schema.id)
        if schema.score is not None:
            wanted.append(schema.score)
        missing = [name for name in wanted if name not in index]
        if missing:
            raise SchemaError(
                f"{path}: missing columns {missing}; header has {header}"
            )

        units: list[Unit] = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(cell.strip() == "" for cell in row):
                continue

            def cell(column: str) -> str:
                pos = index[column]
                if pos >= len(row):
                    raise ParseError(
                        f"row {row_no}, column {column!r}: row too short"
                    )
                return row[pos]

            treat_value = _parse_cell(cell(schema.treatment), row_no, schema.treatment)
            if treat_value not in (0.0, 1.0):
                raise ValidationError(
                    f"row {row_no}, column {schema.treatment!r}: treatment value "
                    f"{treat_value!r} is not 0 or 1"
                )
            outcome = _parse_cell(cell(schema.outcome), row_no, schema.outcome)
            covs = tuple(
                _parse_cell(cell(name), row_no, name) for name in schema.covariates
            )
            unit_id = cell(schema.id).strip() if schema.id is not None else str(row_no)
            score = (
                _parse_cell(cell(schema.score), row_no, schema.score)
                if schema.score is not None
                else None
            )
            units.append(
                Unit(
                    id=unit_id,
                    outcome=outcome,
                    treated=int(treat_value),
                    covariates=covs,
                    score=score,
                )
            )
    return Dataset(units, schema.covariates)


class MatchAssignment:
    """Binary match matrix stored as sorted (treated, control) pairs.

    Each pair carries weight exactly one; a duplicate pair is rejected.
    Controls may be reused across treated units, subject to whatever
    reuse cap the producing model enforced.
    """

    def __init__(
        self,
        n_treated: int,
        n_control: int,
        pairs: Iterable[tuple[int, int]],
    ):
        if n_treated < 1 or n_control < 1:
            raise ValidationError("assignment needs at least one unit per arm")
        pair_list = [(int(i), int(j)) for i, j in pairs]
        seen: set[tuple[int, int]] = set()
        for i, j in pair_list:
            if not (0 <= i < n_treated) or not (0 <= j < n_control):
                raise ValidationError(f"pair ({i}, {j}) is out of range")
            if (i, j) in seen:
                raise ValidationError(f"duplicate pair ({i}, {j})")
            seen.add((i, j))
        self._n_treated = n_treated
        self._n_control = n_control
        self._pairs = tuple(sorted(pair_list))
        rows: list[list[int]] = [[] for _ in range(n_treated)]
        counts = np.zeros(n_control, dtype=int)
        for i, j in self._pairs:
            rows[i].append(j)
            counts[j] += 1
        counts.setflags(write=False)
        self._rows = tuple(tuple(r) for r in rows)
        self._counts = counts

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "MatchAssignment":
        """Build from a dense 0/1 matrix of shape (n_treated, n_control)."""
        m = np.asarray(matrix)
        if m.ndim != 2:
            raise ValidationError("match matrix must be two-dimensional")
        if not np.all(np.isin(m, (0, 1))):
            raise ValidationError("match matrix entries must be 0 or 1")
        ii, jj = np.nonzero(m)
        return cls(m.shape[0], m.shape[1], zip(ii.tolist(), jj.tolist()))

    @property
    def n_treated(self) -> int:
        return self._n_treated

    @property
    def n_control(self) -> int:
        return self._n_control

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return self._pairs

    @property
    def n_pairs(self) -> int:
        return len(self._pairs)

    @property
    def control_use_counts(self) -> np.ndarray:
        """Times each control appears across all pairs."""
        return self._counts

    def matched_controls(self, i: int) -> tuple[int, ...]:
        """Controls matched to treated unit i."""
        return self._rows[i]

    @property
    def per_treated_counts(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self._rows)

    @property
    def is_one_to_one(self) -> bool:
        """True when every treated unit has at most one match."""
        return all(len(r) <= 1 for r in self._rows)

    @property
    def covers_all_treated(self) -> bool:
        return all(len(r) >= 1 for r in self._rows)

    def as_matrix(self) -> np.ndarray:
        m = np.zeros((self._n_treated, self._n_control), dtype=float)
        for i, j in self._pairs:
            m[i, j] = 1.0
        return m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MatchAssignment):
            return NotImplemented
        return (
            self._n_treated == other._n_treated
            and self._n_control == other._n_control
            and self._pairs == other._pairs
        )

    def __hash__(self) -> int:
        return hash((self._n_treated, self._n_control, self._pairs))

    def __repr__(self) -> str:
        return (
            f"MatchAssignment(n_treated={self._n_treated}, "
            f"n_control={self._n_control}, n_pairs={self.n_pairs})"
        )


@dataclass(frozen=True)
class EstimateReport:
    """A point estimate plus the bookkeeping needed to interpret it.

    Attributes:
        estimate: The estimated treated-group effect.
        n_matches: N^t for the per-treated-average estimand, pair count
            for the shared-pair estimand.
        estimand_kind: "satt" or "ssatt".
    """

    estimate: float
    n_matches: int
    estimand_kind: str


def estimate_satt(data: Dataset, assignment: MatchAssignment) -> EstimateReport:
    """Per-treated-average effect estimate.

    Computes ybar_t - (1/N^t) sum_i mean(y_c over matches of i). Every
    treated unit must have at least one match.

    Raises:
        EstimandUndefinedError: Some treated unit has no match.
        ValidationError: Assignment shape does not fit the dataset.
    """
    _check_shape(data, assignment)
    if not assignment.covers_all_treated:
        unmatched = [
            data.treated_ids[i]
            for i in range(data.n_treated)
            if not assignment.matched_controls(i)
        ]
        raise EstimandUndefinedError(
            f"treated units without matches: {unmatched[:5]}"
        )
    y_c = data.y_control
    control_mean = 0.0
    for i in range(data.n_treated):
        js = assignment.matched_controls(i)
        control_mean += float(np.mean(y_c[list(js)]))
    control_mean /= data.n_treated
    estimate = float(np.mean(data.y_treated)) - control_mean
    return EstimateReport(estimate=estimate, n_matches=data.n_treated, estimand_kind="satt")


def estimate_ssatt(data: Dataset, assignment: MatchAssignment) -> EstimateReport:
    """Shared-pair effect estimate: mean of y_t - y_c over matched pairs.

    Requires a one-to-one assignment (each treated unit at most one
    match) with at least one pair.

    Raises:
        EstimandUndefinedError: The assignment has no pairs.
        ValidationError: Assignment is not one-to-one or has wrong shape.
    """
    _check_shape(data, assignment)
    if not assignment.is_one_to_one:
        raise ValidationError(
            "shared-pair estimand needs at most one match per treated unit"
        )
    if assignment.n_pairs == 0:
        raise EstimandUndefinedError("assignment has no matched pairs")
    total = 0.0
    for i, j in assignment.pairs:
        total += float(data.y_treated[i] - data.y_control[j])
    return EstimateReport(
        estimate=total / assignment.n_pairs,
        n_matches=assignment.n_pairs,
        estimand_kind="ssatt",
    )


def _check_shape(data: Dataset, assignment: MatchAssignment) -> None:
    if (
        assignment.n_treated != data.n_treated
        or assignment.n_control != data.n_control
    ):
        raise ValidationError(
            f"assignment shape ({assignment.n_treated}, {assignment.n_control}) "
            f"does not match dataset ({data.n_treated}, {data.n_control})"
        )
