"""Integer-program builders for the four supported formulations.

Variable roles:
  w_i_j  binary pair indicator (every formulation)
  v_i_j, z_i  fractional-program transform variables of the
      per-treated-average estimand (one v per pair, z_i = 1/|matches of i|)
  u_i_j, z  transform variables of the shared-pair estimand
      (u = w / match count, z = 1 / match count)

The transform variables make the otherwise fractional objectives linear;
links v <= z_i, v <= w, v >= z_i - (1 - w) pin v = w * z_i at integer
points (and likewise for u and z).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .balance import DistanceMatrix, QuantileGrid, caliper_mask
from .data import Dataset
from .errors import (
    CapacityError,
    ConfigurationError,
    ValidationError,
)

# Two covariate values count as exactly equal below this difference.
EXACT_MATCH_TOLERANCE = 1e-9


class FormulationKind(enum.Enum):
    """Which integer program to build.

    F1: per-treated-average estimand, every treated unit exactly one
        match, controls reusable up to the cap.
    F3: per-treated-average estimand with variable match counts per
        treated unit (the linearized form of the fractional program;
        requests for the fractional program itself build this).
    F4: shared-pair estimand at a fixed total number of matches.
    F5: shared-pair estimand with the total number of matches free.
    """

    F1 = "f1"
    F3 = "f3"
    F4 = "f4"
    F5 = "f5"

    @classmethod
    def from_string(cls, text: str) -> "FormulationKind":
        key = text.strip().lower()
        if key == "f2":
            # The fractional program is solved through its linearization.
            return cls.F3
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(
                f"unknown formulation {text!r}; expected f1, f2, f3, f4 or f5"
            ) from None

    @property
    def estimand_kind(self) -> str:
        return "satt" if self in (FormulationKind.F1, FormulationKind.F3) else "ssatt"


@dataclass(frozen=True)
class QualitySpec:
    """Constraint set 𝒞 plus the structural matching parameters.

    Attributes:
        max_control_reuse: Cap on how many treated units may share one
            control (>= 1).
        match_count: Total number of matched pairs; required by F4,
            must equal N^t if given for F1, ignored by F3/F5.
        distance_budget: Cap on the formulation's aggregate-distance
            functional, None to omit.
        caliper: Pairs farther apart than this are excluded, None to omit.
        moment_targets: {(covariate index, order): cap on the absolute
            moment gap}, in the same normalized units `moment_gap` reports.
        quantile_targets: {(covariate index, grid point index): cap on
            the absolute quantile gap}.
        balance_cap: Uniform first-moment cap applied to every covariate
            (merged with moment_targets, tighter bound wins).
        exact_on: Covariate indices that must match exactly within pairs.
        tolerance_multiplier: The epsilon already applied to the targets
            by the caller; bookkeeping only.
    """

    max_control_reuse: int = 1
    match_count: int | None = None
    distance_budget: float | None = None
    caliper: float | None = None
    moment_targets: dict[tuple[int, int], float] = field(default_factory=dict)
    quantile_targets: dict[tuple[int, int], float] = field(default_factory=dict)
    balance_cap: float | None = None
    exact_on: tuple[int, ...] = ()
    tolerance_multiplier: float = 0.0

    def __post_init__(self) -> None:
        if self.max_control_reuse < 1:
            raise ValidationError("max_control_reuse must be >= 1")
        if self.match_count is not None and self.match_count < 1:
            raise ValidationError("match_count must be >= 1 when given")
        for label, value in (
            ("distance_budget", self.distance_budget),
            ("caliper", self.caliper),
            ("balance_cap", self.balance_cap),
        ):
            if value is not None and (not math.isfinite(value) or value < 0):
                raise ValidationError(f"{label} must be finite and >= 0")
        for name, targets in (
            ("moment_targets", self.moment_targets),
            ("quantile_targets", self.quantile_targets),
        ):
            for key, value in targets.items():
                if not math.isfinite(value) or value < 0:
                    raise ValidationError(
                        f"{name}[{key}] must be finite and >= 0"
                    )
        if self.tolerance_multiplier < 0:
            raise ValidationError("tolerance_multiplier must be >= 0")
        object.__setattr__(self, "moment_targets", dict(self.moment_targets))
        object.__setattr__(self, "quantile_targets", dict(self.quantile_targets))
        object.__setattr__(self, "exact_on", tuple(self.exact_on))

    def effective_moment_targets(
        self, n_covariates: int
    ) -> dict[tuple[int, int], float]:
        """Moment targets with the uniform balance cap merged in."""
        merged = dict(self.moment_targets)
        if self.balance_cap is not None:
            for p in range(n_covariates):
                key = (p, 1)
                cap = self.balance_cap
                merged[key] = min(merged[key], cap) if key in merged else cap
        return merged

    def constraint_families(self) -> tuple[str, ...]:
        """Families this spec would attach, in diagnosis drop order."""
        families = []
        if self.distance_budget is not None:
            families.append("distance")
        if self.moment_targets or self.balance_cap is not None:
            families.append("moment")
        if self.quantile_targets:
            families.append("quantile")
        if self.caliper is not None:
            families.append("caliper")
        if self.exact_on:
            families.append("exact")
        return tuple(families)

    def without_family(self, family: str) -> "QualitySpec":
        """Copy with one constraint family removed (for diagnosis)."""
        kwargs = dict(
            max_control_reuse=self.max_control_reuse,
            match_count=self.match_count,
            distance_budget=self.distance_budget,
            caliper=self.caliper,
            moment_targets=dict(self.moment_targets),
            quantile_targets=dict(self.quantile_targets),
            balance_cap=self.balance_cap,
            exact_on=self.exact_on,
            tolerance_multiplier=self.tolerance_multiplier,
        )
        if family == "distance":
            kwargs["distance_budget"] = None
        elif family == "moment":
            kwargs["moment_targets"] = {}
            kwargs["balance_cap"] = None
        elif family == "quantile":
            kwargs["quantile_targets"] = {}
        elif family == "caliper":
            kwargs["caliper"] = None
        elif family == "exact":
            kwargs["exact_on"] = ()
        else:
            raise ValidationError(f"unknown constraint family {family!r}")
        return QualitySpec(**kwargs)


@dataclass(frozen=True)
class Variable:
    """One model column."""

    name: str
    lower: float
    upper: float
    is_integer: bool


@dataclass(frozen=True)
class LinearConstraint:
    """One model row: sum(coef * column) (sense) rhs."""

    name: str
    label: str
    coeffs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float

    def evaluate(self, x: np.ndarray) -> float:
        return float(sum(coef * x[col] for col, coef in self.coeffs))

    def violation(self, x: np.ndarray) -> float:
        """How far x is outside this row (0 when satisfied)."""
        value = self.evaluate(x)
        if self.sense == "<=":
            return max(0.0, value - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - value)
        return abs(value - self.rhs)


@dataclass
class MipModel:
    """A mixed binary/continuous linear program.

    The index maps variable roles to columns: ("w", i, j), ("v", i, j),
    ("u", i, j), ("z_i", i) and ("z",).
    """

    kind: FormulationKind
    sense: str
    variables: list[Variable]
    constraints: list[LinearConstraint]
    objective: dict[int, float]
    objective_offset: float
    index: dict[tuple, int]
    n_treated: int
    n_control: int

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def estimand_kind(self) -> str:
        return self.kind.estimand_kind

    def column(self, *key) -> int:
        return self.index[tuple(key)]

    def objective_value(self, x: np.ndarray) -> float:
        return self.objective_offset + float(
            sum(coef * x[col] for col, coef in self.objective.items())
        )


class _Assembler:
    """Accumulates variables and rows while building a model."""

    def __init__(self, kind: FormulationKind, sense: str, data: Dataset):
        if sense not in ("min", "max"):
            raise ValidationError(f"objective sense must be min or max, got {sense!r}")
        self.kind = kind
        self.sense = sense
        self.data = data
        self.variables: list[Variable] = []
        self.constraints: list[LinearConstraint] = []
        self.index: dict[tuple, int] = {}

    def add_var(
        self, key: tuple, name: str, lower: float, upper: float, integer: bool
    ) -> int:
        col = len(self.variables)
        self.variables.append(Variable(name, lower, upper, integer))
        self.index[key] = col
        return col

    def add_row(
        self,
        name: str,
        label: str,
        coeffs: Iterable[tuple[int, float]],
        sense: str,
        rhs: float,
    ) -> None:
        self.constraints.append(
            LinearConstraint(name, label, tuple(coeffs), sense, rhs)
        )

    def finish(
        self, objective: dict[int, float], offset: float
    ) -> MipModel:
        return MipModel(
            kind=self.kind,
            sense=self.sense,
            variables=self.variables,
            constraints=self.constraints,
            objective=objective,
            objective_offset=offset,
            index=self.index,
            n_treated=self.data.n_treated,
            n_control=self.data.n_control,
        )


def _add_pair_binaries(asm: _Assembler) -> None:
    for i in range(asm.data.n_treated):
        for j in range(asm.data.n_control):
            asm.add_var(("w", i, j), f"w_{i}_{j}", 0.0, 1.0, True)


def _check_f1_capacity(data: Dataset, spec: QualitySpec) -> None:
    if data.n_control * spec.max_control_reuse < data.n_treated:
        raise CapacityError(
            f"{data.n_control} controls at reuse cap {spec.max_control_reuse} "
            f"cannot cover {data.n_treated} treated units"
        )


def build_f1(
    data: Dataset,
    spec: QualitySpec,
    sense: str = "max",
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
) -> MipModel:
    """One-match-per-treated model of the per-treated-average estimand.

    Rows: per control, reuse cap; per treated, exactly one match.
    Objective: mean(y_t) - (1/N^t) sum y_c[j] w_ij.
    """
    if spec.match_count is not None and spec.match_count != data.n_treated:
        raise ValidationError(
            "this formulation matches every treated unit exactly once, so "
            f"match_count must be {data.n_treated}, got {spec.match_count}"
        )
    _check_f1_capacity(data, spec)
    asm = _Assembler(FormulationKind.F1, sense, data)
    _add_pair_binaries(asm)
    for j in range(data.n_control):
        asm.add_row(
            f"capacity_c{j}",
            "capacity",
            [(asm.index[("w", i, j)], 1.0) for i in range(data.n_treated)],
            "<=",
            float(spec.max_control_reuse),
        )
    for i in range(data.n_treated):
        asm.add_row(
            f"assign_t{i}",
            "assignment",
            [(asm.index[("w", i, j)], 1.0) for j in range(data.n_control)],
            "=",
            1.0,
        )
    objective = {
        asm.index[("w", i, j)]: -float(data.y_control[j]) / data.n_treated
        for i in range(data.n_treated)
        for j in range(data.n_control)
    }
    model = asm.finish(objective, float(np.mean(data.y_treated)))
    return attach_constraints(model, data, spec, distances, grid)


def build_f3(
    data: Dataset,
    spec: QualitySpec,
    sense: str = "max",
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
    reuse_form: str = "strict",
) -> MipModel:
    """Variable-match-count model of the per-treated-average estimand.

    Each treated unit takes any nonempty control subset; v_ij carries
    weight 1/|subset| and z_i its common value, so the objective stays
    linear. reuse_form chooses how the control-reuse cap enters:
    "strict" counts raw pair uses per control (sum_i w_ij <= K^c),
    "printed" uses the transformed aggregate row
    sum_i v_ij <= K^c * sum_i z_i, which only caps reuse on average.
    """
    if reuse_form not in ("strict", "printed"):
        raise ValidationError("reuse_form must be 'strict' or 'printed'")
    if reuse_form == "strict":
        _check_f1_capacity(data, spec)
    asm = _Assembler(FormulationKind.F3, sense, data)
    _add_pair_binaries(asm)
    for i in range(data.n_treated):
        asm.add_var(("z_i", i), f"z_{i}", 0.0, 1.0, False)
    for i in range(data.n_treated):
        for j in range(data.n_control):
            asm.add_var(("v", i, j), f"v_{i}_{j}", 0.0, 1.0, False)
    for i in range(data.n_treated):
        zi = asm.index[("z_i", i)]
        for j in range(data.n_control):
            v = asm.index[("v", i, j)]
            w = asm.index[("w", i, j)]
            asm.add_row(
                f"link_vz_t{i}c{j}", "link", [(v, 1.0), (zi, -1.0)], "<=", 0.0
            )
            asm.add_row(
                f"link_vw_t{i}c{j}", "link", [(v, 1.0), (w, -1.0)], "<=", 0.0
            )
            asm.add_row(
                f"link_lo_t{i}c{j}",
                "link",
                [(v, 1.0), (zi, -1.0), (w, -1.0)],
                ">=",
                -1.0,
            )
        asm.add_row(
            f"normalize_t{i}",
            "normalize",
            [(asm.index[("v", i, j)], 1.0) for j in range(data.n_control)],
            "=",
            1.0,
        )
    kc = float(spec.max_control_reuse)
    if reuse_form == "strict":
        for j in range(data.n_control):
            asm.add_row(
                f"capacity_c{j}",
                "capacity",
                [(asm.index[("w", i, j)], 1.0) for i in range(data.n_treated)],
                "<=",
                kc,
            )
    else:
        for j in range(data.n_control):
            coeffs = [
                (asm.index[("v", i, j)], 1.0) for i in range(data.n_treated)
            ] + [(asm.index[("z_i", i)], -kc) for i in range(data.n_treated)]
            asm.add_row(f"capacity_c{j}", "capacity", coeffs, "<=", 0.0)
    objective = {
        asm.index[("v", i, j)]: -float(data.y_control[j]) / data.n_treated
        for i in range(data.n_treated)
        for j in range(data.n_control)
    }
    model = asm.finish(objective, float(np.mean(data.y_treated)))
    return attach_constraints(model, data, spec, distances, grid)


def build_f4(
    data: Dataset,
    spec: QualitySpec,
    sense: str = "max",
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
) -> MipModel:
    """Fixed-pair-count model of the shared-pair estimand.

    Exactly match_count pairs, each treated unit at most once, controls
    reusable up to the cap. Objective:
    (1/M) sum (y_t[i] - y_c[j]) w_ij.
    """
    if spec.match_count is None:
        raise ConfigurationError(
            "this formulation needs match_count (the total number of pairs)"
        )
    m = spec.match_count
    cap = min(data.n_treated, data.n_control * spec.max_control_reuse)
    if m > cap:
        raise CapacityError(
            f"match_count {m} exceeds matching capacity {cap} "
            f"({data.n_treated} treated, {data.n_control} controls at "
            f"reuse cap {spec.max_control_reuse})"
        )
    asm = _Assembler(FormulationKind.F4, sense, data)
    _add_pair_binaries(asm)
    for j in range(data.n_control):
        asm.add_row(
            f"capacity_c{j}",
            "capacity",
            [(asm.index[("w", i, j)], 1.0) for i in range(data.n_treated)],
            "<=",
            float(spec.max_control_reuse),
        )
    for i in range(data.n_treated):
        asm.add_row(
            f"assign_t{i}",
            "assignment",
            [(asm.index[("w", i, j)], 1.0) for j in range(data.n_control)],
            "<=",
            1.0,
        )
    asm.add_row(
        "total_pairs",
        "total",
        [(col, 1.0) for col in range(len(asm.variables))],
        "=",
        float(m),
    )
    objective = {
        asm.index[("w", i, j)]: float(data.y_treated[i] - data.y_control[j]) / m
        for i in range(data.n_treated)
        for j in range(data.n_control)
    }
    model = asm.finish(objective, 0.0)
    return attach_constraints(model, data, spec, distances, grid)


def build_f5(
    data: Dataset,
    spec: QualitySpec,
    sense: str = "max",
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
) -> MipModel:
    """Free-pair-count model of the shared-pair estimand.

    u_ij carries weight 1/(total pairs) and z its common value. At least
    one pair is implied by the normalization row. The w-level row
    sum_j w_ij <= 1 per treated unit is implied at integer points by the
    u-share rows but is added explicitly to tighten the relaxation.
    """
    asm = _Assembler(FormulationKind.F5, sense, data)
    _add_pair_binaries(asm)
    z = asm.add_var(("z",), "z", 0.0, 1.0, False)
    for i in range(data.n_treated):
        for j in range(data.n_control):
            asm.add_var(("u", i, j), f"u_{i}_{j}", 0.0, 1.0, False)
    for i in range(data.n_treated):
        for j in range(data.n_control):
            u = asm.index[("u", i, j)]
            w = asm.index[("w", i, j)]
            asm.add_row(
                f"link_uz_t{i}c{j}", "link", [(u, 1.0), (z, -1.0)], "<=", 0.0
            )
            asm.add_row(
                f"link_uw_t{i}c{j}", "link", [(u, 1.0), (w, -1.0)], "<=", 0.0
            )
            asm.add_row(
                f"link_lo_t{i}c{j}",
                "link",
                [(u, 1.0), (z, -1.0), (w, -1.0)],
                ">=",
                -1.0,
            )
    asm.add_row(
        "normalize",
        "normalize",
        [
            (asm.index[("u", i, j)], 1.0)
            for i in range(data.n_treated)
            for j in range(data.n_control)
        ],
        "=",
        1.0,
    )
    for i in range(data.n_treated):
        asm.add_row(
            f"share_t{i}",
            "assignment",
            [(asm.index[("u", i, j)], 1.0) for j in range(data.n_control)]
            + [(z, -1.0)],
            "<=",
            0.0,
        )
        asm.add_row(
            f"assign_t{i}",
            "assignment",
            [(asm.index[("w", i, j)], 1.0) for j in range(data.n_control)],
            "<=",
            1.0,
        )
    kc = float(spec.max_control_reuse)
    for j in range(data.n_control):
        asm.add_row(
            f"capacity_c{j}",
            "capacity",
            [(asm.index[("u", i, j)], 1.0) for i in range(data.n_treated)]
            + [(z, -kc)],
            "<=",
            0.0,
        )
    objective = {
        asm.index[("u", i, j)]: float(data.y_treated[i] - data.y_control[j])
        for i in range(data.n_treated)
        for j in range(data.n_control)
    }
    model = asm.finish(objective, 0.0)
    return attach_constraints(model, data, spec, distances, grid)


def build_model(
    data: Dataset,
    spec: QualitySpec,
    kind: FormulationKind,
    sense: str = "max",
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
    reuse_form: str = "strict",
) -> MipModel:
    """Dispatch to the builder for the requested formulation."""
    if kind is FormulationKind.F1:
        return build_f1(data, spec, sense, distances, grid)
    if kind is FormulationKind.F3:
        return build_f3(data, spec, sense, distances, grid, reuse_form)
    if kind is FormulationKind.F4:
        return build_f4(data, spec, sense, distances, grid)
    if kind is FormulationKind.F5:
        return build_f5(data, spec, sense, distances, grid)
    raise ValidationError(f"unsupported formulation {kind!r}")


def _pair_variable_role(kind: FormulationKind) -> str:
    """Role whose weights define the formulation's balance functionals."""
    if kind is FormulationKind.F3:
        return "v"
    if kind is FormulationKind.F5:
        return "u"
    return "w"


def attach_constraints(
    model: MipModel,
    data: Dataset,
    spec: QualitySpec,
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
) -> MipModel:
    """Append the match-quality rows that `spec` requests.

    Moment and quantile rows bound the same normalized gaps that the
    profiling functions report, expressed in each formulation's own
    weight variables; the distance budget uses the transformed-variable
    aggregate (for F3 that caps the z_i-weighted mean of per-treated
    mean distances, for F5 it is identical to the raw total).

    Raises:
        ConfigurationError: A family needs a distance matrix or quantile
            grid that was not supplied.
    """
    kind = model.kind
    nt, nc = data.n_treated, data.n_control
    role = _pair_variable_role(kind)

    def pair_col(i: int, j: int) -> int:
        return model.index[(role, i, j)]

    needs_d = spec.caliper is not None or spec.distance_budget is not None
    if needs_d and distances is None:
        raise ConfigurationError(
            "caliper and distance-budget constraints need a distance matrix"
        )
    if distances is not None and distances.shape != (nt, nc):
        raise ValidationError(
            f"distance matrix shape {distances.shape} does not match "
            f"dataset ({nt}, {nc})"
        )

    if spec.caliper is not None:
        admissible = caliper_mask(distances, spec.caliper)
        for i in range(nt):
            for j in range(nc):
                if admissible[i, j] == 0:
                    model.constraints.append(
                        LinearConstraint(
                            f"caliper_t{i}c{j}",
                            "caliper",
                            ((pair_col(i, j), 1.0),),
                            "<=",
                            0.0,
                        )
                    )

    for p in spec.exact_on:
        if not (0 <= p < data.n_covariates):
            raise ValidationError(f"exact-match covariate index {p} out of range")
        for i in range(nt):
            for j in range(nc):
                if (
                    abs(data.x_treated[i, p] - data.x_control[j, p])
                    > EXACT_MATCH_TOLERANCE
                ):
                    model.constraints.append(
                        LinearConstraint(
                            f"exact_p{p}_t{i}c{j}",
                            "exact",
                            ((pair_col(i, j), 1.0),),
                            "<=",
                            0.0,
                        )
                    )

    if spec.distance_budget is not None:
        budget = float(spec.distance_budget)
        coeffs = [
            (pair_col(i, j), float(distances.entries[i, j]))
            for i in range(nt)
            for j in range(nc)
        ]
        if kind is FormulationKind.F3:
            coeffs += [
                (model.index[("z_i", i)], -budget) for i in range(nt)
            ]
            model.constraints.append(
                LinearConstraint("distance_budget", "distance", tuple(coeffs), "<=", 0.0)
            )
        elif kind is FormulationKind.F5:
            coeffs.append((model.index[("z",)], -budget))
            model.constraints.append(
                LinearConstraint("distance_budget", "distance", tuple(coeffs), "<=", 0.0)
            )
        else:
            model.constraints.append(
                LinearConstraint(
                    "distance_budget", "distance", tuple(coeffs), "<=", budget
                )
            )

    if kind in (FormulationKind.F1, FormulationKind.F3):
        scale = 1.0 / nt
    elif kind is FormulationKind.F4:
        scale = 1.0 / spec.match_count
    else:
        scale = 1.0

    moment_targets = spec.effective_moment_targets(data.n_covariates)
    for (p, k), sigma in sorted(moment_targets.items()):
        if not (0 <= p < data.n_covariates):
            raise ValidationError(f"moment covariate index {p} out of range")
        if k < 1:
            raise ValidationError("moment order must be >= 1")
        _append_abs_rows(
            model,
            f"moment_p{p}k{k}",
            "moment",
            _balance_coeffs(
                model,
                data,
                kind,
                scale,
                lambda i, j, p=p, k=k: _moment_term(data, kind, p, k, i, j),
            ),
            _moment_anchor(data, kind, p, k),
            float(sigma),
        )

    if spec.quantile_targets:
        if grid is None:
            raise ConfigurationError("quantile constraints need a quantile grid")
        for (p, qi), eps in sorted(spec.quantile_targets.items()):
            if not (0 <= p < data.n_covariates):
                raise ValidationError(
                    f"quantile covariate index {p} out of range"
                )
            if not (0 <= qi < grid.n_points):
                raise ValidationError(f"quantile grid index {qi} out of range")
            _append_abs_rows(
                model,
                f"quantile_p{p}q{qi}",
                "quantile",
                _balance_coeffs(
                    model,
                    data,
                    kind,
                    scale,
                    lambda i, j, p=p, qi=qi: _quantile_term(
                        data, grid, p, qi, kind, i, j
                    ),
                ),
                _quantile_anchor(data, grid, kind, p, qi),
                float(eps),
            )
    return model


def _moment_term(
    data: Dataset, kind: FormulationKind, p: int, k: int, i: int, j: int
) -> float:
    """Per-pair contribution to the moment functional."""
    c = float(data.x_control[j, p]) ** k
    if kind in (FormulationKind.F1, FormulationKind.F3):
        return c
    return float(data.x_treated[i, p]) ** k - c


def _quantile_term(
    data: Dataset,
    grid: QuantileGrid,
    p: int,
    qi: int,
    kind: FormulationKind,
    i: int,
    j: int,
) -> float:
    if kind in (FormulationKind.F1, FormulationKind.F3):
        g = float(grid.treated_values[p, qi])
        return 1.0 if data.x_control[j, p] <= g else 0.0
    q = float(grid.raw_values[p, qi])
    ind_t = 1.0 if data.x_treated[i, p] <= q else 0.0
    ind_c = 1.0 if data.x_control[j, p] <= q else 0.0
    return ind_t - ind_c


def _balance_coeffs(model, data, kind, scale, term) -> list[tuple[int, float]]:
    """Coefficients of the balance functional in pair variables.

    F1/F3: (1/N^t) sum term_c * (w or v); F4: (1/M) sum
    (term_t - term_c) * w; F5: sum (term_t - term_c) * u.
    """
    nt, nc = data.n_treated, data.n_control
    role = _pair_variable_role(kind)
    coeffs = []
    for i in range(nt):
        for j in range(nc):
            coeffs.append((model.index[(role, i, j)], term(i, j) * scale))
    return coeffs


def _moment_anchor(data: Dataset, kind: FormulationKind, p: int, k: int) -> float:
    """Constant the moment functional is compared against."""
    if kind in (FormulationKind.F1, FormulationKind.F3):
        return float(np.mean(data.x_treated[:, p] ** k))
    return 0.0


def _quantile_anchor(
    data: Dataset,
    grid: QuantileGrid,
    kind: FormulationKind,
    p: int,
    qi: int,
) -> float:
    if kind in (FormulationKind.F1, FormulationKind.F3):
        return float(grid.attained_proportions[p, qi])
    return 0.0


def _append_abs_rows(
    model: MipModel,
    name: str,
    label: str,
    coeffs: list[tuple[int, float]],
    anchor: float,
    bound: float,
) -> None:
    """Linearize |anchor - expr| <= bound into a pair of rows."""
    model.constraints.append(
        LinearConstraint(f"{name}_hi", label, tuple(coeffs), "<=", anchor + bound)
    )
    model.constraints.append(
        LinearConstraint(f"{name}_lo", label, tuple(coeffs), ">=", anchor - bound)
    )


def lp_dump(model: MipModel) -> str:
    """Readable LP-style text dump of a model, in model order.

    Format: an objective line, a `subject to` block with one named row
    per line, a `bounds` block, and a `binaries` block listing the
    integer columns.
    """
    lines = [f"\\ {model.kind.value} ({model.estimand_kind}), "
             f"{model.n_treated} treated x {model.n_control} controls"]
    lines.append("maximize" if model.sense == "max" else "minimize")
    terms = [
        _term(coef, model.variables[col].name)
        for col, coef in model.objective.items()
        if coef != 0.0
    ]
    offset = model.objective_offset
    obj = " ".join(terms) if terms else "0"
    if offset != 0.0:
        obj += f" + {offset!r}" if offset > 0 else f" - {-offset!r}"
    lines.append(f"  obj: {obj}")
    lines.append("subject to")
    for row in model.constraints:
        body = " ".join(
            _term(coef, model.variables[col].name) for col, coef in row.coeffs
        )
        lines.append(f"  {row.name}: {body} {row.sense} {row.rhs!r}")
    lines.append("bounds")
    for var in model.variables:
        lines.append(f"  {var.lower!r} <= {var.name} <= {var.upper!r}")
    binaries = [v.name for v in model.variables if v.is_integer]
    lines.append("binaries")
    if binaries:
        lines.append("  " + " ".join(binaries))
    lines.append("end")
    return "\n".join(lines) + "\n"


def _term(coef: float, name: str) -> str:
    sign = "+" if coef >= 0 else "-"
    return f"{sign} {abs(coef)!r} {name}"
