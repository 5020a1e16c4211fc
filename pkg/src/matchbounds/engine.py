"""Bounds engine: baselines, derived specs, max/min solves, sweeps, diffs.

The central entry point is :func:`matching_bounds`, which builds the
max and min models for one formulation, solves both, decodes the
assignments, and recomputes the estimates from the decoded pairs (the
recomputed estimate is authoritative; in exact mode it must agree with
the solver objective to 1e-7).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import balance
from .balance import (
    DistanceMatrix,
    QualityProfile,
    QuantileGrid,
    mean_weighted_distance,
    profile_assignment,
)
from .data import (
    Dataset,
    EstimateReport,
    MatchAssignment,
    estimate_satt,
    estimate_ssatt,
)
from .errors import (
    CapacityError,
    ConfigurationError,
    NumericError,
    ValidationError,
)
from .model import (
    EXACT_MATCH_TOLERANCE,
    FormulationKind,
    MipModel,
    QualitySpec,
    build_model,
)
from .solver import FEASIBILITY_TOL, Solution, SolveOptions, solve

_Z_975 = 1.959963984540054
CI_LABEL = "naive-two-sample"


def max_workers(n_tasks: int) -> int:
    """Worker cap from the MATCHBOUND_THREADS environment variable.

    Unset means sequential. Values below 1 or non-integers are a
    configuration error.
    """
    raw = os.environ.get("MATCHBOUND_THREADS")
    if raw is None or raw.strip() == "":
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigurationError(
            f"MATCHBOUND_THREADS must be an integer, got {raw!r}"
        ) from None
    if cap < 1:
        raise ConfigurationError("MATCHBOUND_THREADS must be >= 1")
    return max(1, min(cap, n_tasks))


def _run_tasks(tasks):
    """Run zero-argument callables, possibly on a small thread pool."""
    workers = max_workers(len(tasks))
    if workers <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


def greedy_nn_match(
    data: Dataset, distances: DistanceMatrix, replace: bool = False
) -> MatchAssignment:
    """Greedy nearest-neighbor baseline.

    Walks treated units in row order and takes the closest control
    (lowest index on ties); without replacement each control is used at
    most once.

    Raises:
        CapacityError: No control is left for some treated unit.
    """
    if distances.shape != (data.n_treated, data.n_control):
        raise ValidationError("distance matrix does not match the dataset")
    d = distances.entries
    used = np.zeros(data.n_control, dtype=bool)
    pairs = []
    for i in range(data.n_treated):
        row = d[i].copy()
        if not replace:
            if used.all():
                raise CapacityError(
                    f"no unused control left for treated unit "
                    f"{data.treated_ids[i]!r}; rerun with replacement or "
                    "add controls"
                )
            row[used] = np.inf
        j = int(np.argmin(row))
        pairs.append((i, j))
        used[j] = True
    return MatchAssignment(data.n_treated, data.n_control, pairs)


def spec_from_baseline(
    data: Dataset,
    baseline: MatchAssignment,
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
    orders: tuple[int, ...] = (1, 2, 3),
    tolerance: float = 0.05,
    estimand_kind: str | None = None,
    max_control_reuse: int | None = None,
    match_count: int | None = None,
    profile: QualityProfile | None = None,
    caliper: float | None = None,
    exact_on: tuple[int, ...] = (),
    distance_form: str = "total",
) -> QualitySpec:
    """Constraint set anchored at a baseline's measured quality.

    Every measured statistic becomes a bound of (1 + tolerance) times
    its profiled value: moment gaps per (covariate, order), quantile
    gaps per grid point when a grid is given, and the distance budget
    when a distance matrix is given. Structural fields default to the
    baseline's shape (reuse cap: its maximum control reuse; match
    count: its pair count). Pass a precomputed (e.g. averaged) profile
    to anchor on it instead of re-profiling the baseline. The caliper
    and exact-match settings are carried through unscaled; tolerance
    does not loosen them.

    distance_form selects the budget's measurement: "total" (sum of
    pair distances, the budget the fixed-match-count programs cap) or
    "per-treated-mean" (the weighted mean the variable-match-count
    program caps; see :func:`matchbounds.balance.mean_weighted_distance`),
    in which case the anchor is recomputed from the baseline and the
    distance matrix.
    """
    if tolerance < 0:
        raise ValidationError("tolerance must be >= 0")
    if distance_form not in ("total", "per-treated-mean"):
        raise ValidationError(f"unknown distance form {distance_form!r}")
    prof = profile
    if prof is None:
        prof = profile_assignment(
            data, baseline, distances, grid, orders, estimand_kind
        )
    scale = 1.0 + tolerance
    moment_targets = {key: scale * gap for key, gap in prof.moment_gaps.items()}
    quantile_targets = {
        key: scale * gap for key, gap in prof.quantile_gaps.items()
    }
    budget = None
    if distances is not None and distance_form == "per-treated-mean":
        budget = scale * mean_weighted_distance(baseline, distances)
    elif prof.total_distance is not None:
        budget = scale * prof.total_distance
    reuse = max_control_reuse
    if reuse is None:
        reuse = max(1, int(baseline.control_use_counts.max()))
    pairs = match_count if match_count is not None else baseline.n_pairs
    return QualitySpec(
        max_control_reuse=reuse,
        match_count=pairs,
        distance_budget=budget,
        caliper=caliper,
        moment_targets=moment_targets,
        quantile_targets=quantile_targets,
        exact_on=exact_on,
        tolerance_multiplier=tolerance,
    )


def budget_form_for(kind: FormulationKind) -> str:
    """Distance-budget measurement matching a formulation's budget row."""
    return "per-treated-mean" if kind is FormulationKind.F3 else "total"


@dataclass(frozen=True)
class SlackEntry:
    """Measured value of one constraint against its bound."""

    family: str
    key: str
    measured: float
    bound: float
    slack: float
    ok: bool


@dataclass(frozen=True)
class BoundSide:
    """One side (max or min) of a bounds computation."""

    sense: str
    assignment: MatchAssignment
    estimate: EstimateReport
    solution: Solution
    ci95: tuple[float, float] | None
    ci_label: str
    quality_check: tuple[SlackEntry, ...]


@dataclass(frozen=True)
class BoundsResult:
    """Bracketing interval for one formulation and constraint set."""

    formulation: FormulationKind
    estimand_kind: str
    spec_used: QualitySpec
    lower: BoundSide | None
    upper: BoundSide | None
    diagnosis: str | None = None

    @property
    def feasible(self) -> bool:
        return self.lower is not None and self.upper is not None

    @property
    def width(self) -> float | None:
        if not self.feasible:
            return None
        return self.upper.estimate.estimate - self.lower.estimate.estimate

    @property
    def straddles_zero(self) -> bool:
        if not self.feasible:
            return False
        return self.lower.estimate.estimate <= 0.0 <= self.upper.estimate.estimate


def decode_assignment(
    model: MipModel, solution: Solution, data: Dataset
) -> MatchAssignment:
    """Read the matched pairs out of a solver solution.

    Pairs are the w columns above one half. For the transformed
    formulations the transform variables are checked against the
    selected pairs (v close to z_i on selected pairs, u close to z),
    catching solver inconsistencies before an estimate is built on them.
    """
    if solution.values.size != model.n_variables:
        raise ValidationError("solution does not match the model's columns")
    x = solution.values
    pairs = [
        (i, j)
        for (role, *ij) in model.index
        if role == "w"
        for i, j in [tuple(ij)]
        if x[model.index[("w", i, j)]] > 0.5
    ]
    assignment = MatchAssignment(model.n_treated, model.n_control, pairs)
    tol = 1e-5
    if model.kind is FormulationKind.F3:
        for i in range(model.n_treated):
            zi = x[model.index[("z_i", i)]]
            for j in range(model.n_control):
                v = x[model.index[("v", i, j)]]
                w = x[model.index[("w", i, j)]]
                want = zi if w > 0.5 else 0.0
                if abs(v - want) > tol:
                    raise NumericError(
                        f"transform variable v_{i}_{j}={v!r} inconsistent "
                        f"with selected pairs (expected {want!r})"
                    )
    if model.kind is FormulationKind.F5:
        z = x[model.index[("z",)]]
        for i in range(model.n_treated):
            for j in range(model.n_control):
                u = x[model.index[("u", i, j)]]
                w = x[model.index[("w", i, j)]]
                want = z if w > 0.5 else 0.0
                if abs(u - want) > tol:
                    raise NumericError(
                        f"transform variable u_{i}_{j}={u!r} inconsistent "
                        f"with selected pairs (expected {want!r})"
                    )
    return assignment


def _estimate_for(
    data: Dataset, assignment: MatchAssignment, kind: FormulationKind
) -> EstimateReport:
    if kind.estimand_kind == "satt":
        return estimate_satt(data, assignment)
    return estimate_ssatt(data, assignment)


def _naive_ci(
    data: Dataset, assignment: MatchAssignment, report: EstimateReport
) -> tuple[float, float] | None:
    """Two-sample difference-in-means interval on the matched sample.

    A labeled placeholder: it ignores that the assignment was chosen by
    optimization, so it quantifies sampling noise only.
    """
    if report.estimand_kind == "ssatt":
        ti = [i for i, _ in assignment.pairs]
        tj = [j for _, j in assignment.pairs]
        y_t = data.y_treated[ti]
        y_c = data.y_control[tj]
    else:
        y_t = data.y_treated
        counts = assignment.control_use_counts
        y_c = np.repeat(data.y_control, counts)
    if y_t.size < 2 or y_c.size < 2:
        return None
    var = float(np.var(y_t, ddof=1)) / y_t.size + float(
        np.var(y_c, ddof=1)
    ) / y_c.size
    half = _Z_975 * float(np.sqrt(var))
    return (report.estimate - half, report.estimate + half)


def _measure_quality(
    data: Dataset,
    assignment: MatchAssignment,
    spec: QualitySpec,
    kind: FormulationKind,
    distances: DistanceMatrix | None,
    grid: QuantileGrid | None,
) -> tuple[SlackEntry, ...]:
    """Re-measure each constrained statistic on the decoded assignment."""
    entries: list[SlackEntry] = []
    fractional = kind is FormulationKind.F3 and not assignment.is_one_to_one
    estimand = kind.estimand_kind

    def add(family: str, key: str, measured: float, bound: float) -> None:
        slack = bound - measured
        entries.append(
            SlackEntry(family, key, measured, bound, slack, slack >= -FEASIBILITY_TOL)
        )

    if spec.distance_budget is not None and distances is not None:
        if kind is FormulationKind.F3:
            measured = balance.mean_weighted_distance(assignment, distances)
        else:
            measured = balance.aggregate_distance(assignment, distances)
        add("distance", "budget", measured, spec.distance_budget)
    if spec.caliper is not None and distances is not None:
        add(
            "caliper",
            "max-pair",
            balance.max_pair_distance(assignment, distances),
            spec.caliper,
        )
    for (p, k), sigma in sorted(
        spec.effective_moment_targets(data.n_covariates).items()
    ):
        if fractional:
            measured = balance.fractional_moment_gap(data, assignment, p, k)
        else:
            measured = balance.moment_gap(data, assignment, p, k, estimand)
        add("moment", f"p{p}k{k}", measured, sigma)
    if spec.quantile_targets and grid is not None:
        per_cov: dict[int, np.ndarray] = {}
        for (p, qi), eps in sorted(spec.quantile_targets.items()):
            if p not in per_cov:
                if fractional:
                    per_cov[p] = balance.fractional_quantile_gap(
                        data, assignment, grid, p
                    )
                else:
                    per_cov[p] = balance.quantile_gap(
                        data, assignment, grid, p, estimand
                    )
            add("quantile", f"p{p}q{qi}", float(per_cov[p][qi]), eps)
    for p in spec.exact_on:
        worst = 0.0
        for i, j in assignment.pairs:
            worst = max(
                worst, abs(float(data.x_treated[i, p] - data.x_control[j, p]))
            )
        entries.append(
            SlackEntry(
                "exact",
                f"p{p}",
                worst,
                EXACT_MATCH_TOLERANCE,
                EXACT_MATCH_TOLERANCE - worst,
                worst <= EXACT_MATCH_TOLERANCE,
            )
        )
    return tuple(entries)


def _solve_side(
    data: Dataset,
    spec: QualitySpec,
    kind: FormulationKind,
    sense: str,
    options: SolveOptions,
    distances: DistanceMatrix | None,
    grid: QuantileGrid | None,
    reuse_form: str,
) -> BoundSide | None:
    model = build_model(data, spec, kind, sense, distances, grid, reuse_form)
    solution = solve(model, options)
    if not solution.is_feasible:
        return None
    assignment = decode_assignment(model, solution, data)
    report = _estimate_for(data, assignment, kind)
    if (
        options.mode == "exact"
        and solution.objective is not None
        and abs(report.estimate - solution.objective) > 1e-7
    ):
        raise NumericError(
            f"recomputed estimate {report.estimate!r} disagrees with solver "
            f"objective {solution.objective!r}"
        )
    return BoundSide(
        sense=sense,
        assignment=assignment,
        estimate=report,
        solution=solution,
        ci95=_naive_ci(data, assignment, report),
        ci_label=CI_LABEL,
        quality_check=_measure_quality(data, assignment, spec, kind, distances, grid),
    )


_DIAGNOSIS_ORDER = ("distance", "moment", "quantile", "caliper", "exact")


def _diagnose_infeasible(
    data: Dataset,
    spec: QualitySpec,
    kind: FormulationKind,
    options: SolveOptions,
    distances: DistanceMatrix | None,
    grid: QuantileGrid | None,
    reuse_form: str,
) -> str:
    present = spec.constraint_families()
    for family in _DIAGNOSIS_ORDER:
        if family not in present:
            continue
        relaxed = spec.without_family(family)
        try:
            model = build_model(
                data, relaxed, kind, "min", distances, grid, reuse_form
            )
        except CapacityError:
            continue
        if solve(model, options).is_feasible:
            return (
                f"infeasible; dropping the {family!r} constraint family "
                "restores feasibility"
            )
    return (
        "infeasible even with each single constraint family dropped; the "
        "structural rows (capacity, assignment, pair count) cannot be met"
    )


def matching_bounds(
    data: Dataset,
    spec: QualitySpec,
    kind: FormulationKind,
    options: SolveOptions | None = None,
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
    reuse_form: str = "strict",
) -> BoundsResult:
    """Maximize and minimize the estimate over the constrained set.

    Returns a BoundsResult whose estimates come from the decoded
    assignments, never from raw solver objectives. When either sense is
    infeasible, the result carries a diagnosis naming the first
    constraint family whose removal restores feasibility (drop order:
    distance, moment, quantile, caliper, exact) and no sides.

    The two solves run concurrently when MATCHBOUND_THREADS allows.
    """
    options = options or SolveOptions()
    sides = _run_tasks(
        [
            lambda s=sense: _solve_side(
                data, spec, kind, s, options, distances, grid, reuse_form
            )
            for sense in ("min", "max")
        ]
    )
    lower, upper = sides
    if lower is None or upper is None:
        diagnosis = _diagnose_infeasible(
            data, spec, kind, options, distances, grid, reuse_form
        )
        return BoundsResult(
            formulation=kind,
            estimand_kind=kind.estimand_kind,
            spec_used=spec,
            lower=None,
            upper=None,
            diagnosis=diagnosis,
        )
    if (
        options.mode == "exact"
        and lower.estimate.estimate > upper.estimate.estimate
    ):
        if lower.estimate.estimate > upper.estimate.estimate + 1e-9:
            raise NumericError(
                "lower bound exceeds upper bound; solver returned "
                "inconsistent optima"
            )
        # The two solves can return distinct equally-optimal assignments
        # whose recomputed estimates differ by rounding dust in a way that
        # inverts the interval. Both assignments are feasible for the same
        # constraint set, so each side adopts the other's point: the
        # smaller estimate is a valid minimum and the larger a valid
        # maximum.
        lower, upper = replace(upper, sense="min"), replace(lower, sense="max")
    return BoundsResult(
        formulation=kind,
        estimand_kind=kind.estimand_kind,
        spec_used=spec,
        lower=lower,
        upper=upper,
    )


def _adopt_side(
    side: BoundSide,
    data: Dataset,
    spec: QualitySpec,
    kind: FormulationKind,
    distances: DistanceMatrix | None,
    grid: QuantileGrid | None,
) -> BoundSide:
    """Carry a bound side over to a looser spec, re-measuring quality."""
    return replace(
        side,
        quality_check=_measure_quality(
            data, side.assignment, spec, kind, distances, grid
        ),
    )


@dataclass(frozen=True)
class SweepPoint:
    epsilon: float
    spec: QualitySpec
    result: BoundsResult


@dataclass(frozen=True)
class SweepResult:
    """Bounds at each tolerance multiplier, plus the anchoring baseline."""

    kind: FormulationKind
    baseline_method: str
    baseline_estimate: EstimateReport
    baseline_profile: QualityProfile
    points: tuple[SweepPoint, ...]


def epsilon_sweep(
    data: Dataset,
    baseline: MatchAssignment,
    epsilons: tuple[float, ...],
    kind: FormulationKind,
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
    orders: tuple[int, ...] = (1, 2, 3),
    options: SolveOptions | None = None,
    baseline_method: str = "greedy-nn",
    reuse_form: str = "strict",
    caliper: float | None = None,
    exact_on: tuple[int, ...] = (),
    match_count: int | None = None,
) -> SweepResult:
    """Bounds at every tolerance in an ascending epsilon grid.

    The baseline is profiled once; each epsilon scales every profiled
    statistic by (1 + epsilon) and solves both senses. Infeasible
    points are recorded with their diagnosis and the sweep continues.

    The constraint sets are nested (larger epsilon only loosens every
    bound), so in exact mode each feasible point adopts the previous
    feasible point's optimizer whenever rounding dust in the recomputed
    estimates would otherwise shrink the interval; reported intervals
    are then weakly nested with no tolerance. A fresh solve whose
    interval shrinks by more than 1e-9 before adoption indicates a
    solver fault and raises NumericError.
    """
    if not epsilons:
        raise ValidationError("epsilon grid is empty")
    eps = [float(e) for e in epsilons]
    if any(e < 0 for e in eps):
        raise ValidationError("epsilons must be >= 0")
    if eps != sorted(set(eps)):
        raise ValidationError("epsilons must be strictly ascending")
    options = options or SolveOptions()
    prof = profile_assignment(
        data, baseline, distances, grid, orders, kind.estimand_kind
    )
    baseline_report = _estimate_for(data, baseline, kind)

    def point(e: float) -> SweepPoint:
        spec = spec_from_baseline(
            data,
            baseline,
            distances,
            grid,
            orders,
            tolerance=e,
            estimand_kind=kind.estimand_kind,
            match_count=match_count,
            profile=prof,
            caliper=caliper,
            exact_on=exact_on,
            distance_form=budget_form_for(kind),
        )
        result = matching_bounds(
            data, spec, kind, options, distances, grid, reuse_form
        )
        return SweepPoint(epsilon=e, spec=spec, result=result)

    points = _run_tasks([lambda e=e: point(e) for e in eps])
    if options.mode == "exact":
        prev: SweepPoint | None = None
        for index, pt in enumerate(points):
            if not pt.result.feasible:
                prev = None
                continue
            if prev is not None:
                lo_prev = prev.result.lower.estimate.estimate
                hi_prev = prev.result.upper.estimate.estimate
                lo = pt.result.lower.estimate.estimate
                hi = pt.result.upper.estimate.estimate
                if lo > lo_prev + 1e-9 or hi < hi_prev - 1e-9:
                    raise NumericError(
                        f"interval at epsilon={pt.epsilon} is not nested over "
                        f"epsilon={prev.epsilon}; solver returned inconsistent "
                        "optima"
                    )
                lower = pt.result.lower
                upper = pt.result.upper
                if lo > lo_prev:
                    lower = _adopt_side(
                        prev.result.lower, data, pt.spec, kind, distances, grid
                    )
                if hi < hi_prev:
                    upper = _adopt_side(
                        prev.result.upper, data, pt.spec, kind, distances, grid
                    )
                if lower is not pt.result.lower or upper is not pt.result.upper:
                    pt = replace(
                        pt, result=replace(pt.result, lower=lower, upper=upper)
                    )
                    points[index] = pt
            prev = pt
    return SweepResult(
        kind=kind,
        baseline_method=baseline_method,
        baseline_estimate=baseline_report,
        baseline_profile=prof,
        points=tuple(points),
    )


@dataclass(frozen=True)
class DiffRow:
    """Usage of one control unit across the two bound assignments."""

    control_id: str
    lower_rows: int
    upper_rows: int
    outcome: float
    outcome_sum_lower_only: float
    outcome_sum_upper_only: float


@dataclass(frozen=True)
class AssignmentDiff:
    """How the two bound assignments differ.

    shared_pairs counts identical (treated, control) pairs;
    differing_controls counts control-slot differences (the sum over
    controls of |use count in lower - use count in upper|).
    """

    shared_pairs: int
    lower_only_pairs: int
    upper_only_pairs: int
    differing_controls: int
    rows: tuple[DiffRow, ...] = field(repr=False)

    @property
    def outcome_sum_lower_only(self) -> float:
        return float(sum(r.outcome_sum_lower_only for r in self.rows))

    @property
    def outcome_sum_upper_only(self) -> float:
        return float(sum(r.outcome_sum_upper_only for r in self.rows))


def compare_assignments(
    data: Dataset, lower: MatchAssignment, upper: MatchAssignment
) -> AssignmentDiff:
    """Pair-level and control-level diff of two assignments."""
    for a in (lower, upper):
        if (a.n_treated, a.n_control) != (data.n_treated, data.n_control):
            raise ValidationError("assignment does not match the dataset")
    set_l = set(lower.pairs)
    set_u = set(upper.pairs)
    shared = len(set_l & set_u)
    counts_l = lower.control_use_counts
    counts_u = upper.control_use_counts
    differing = int(np.sum(np.abs(counts_l - counts_u)))
    rows = []
    for j in range(data.n_control):
        cl, cu = int(counts_l[j]), int(counts_u[j])
        if cl == 0 and cu == 0:
            continue
        extra_l = max(cl - cu, 0)
        extra_u = max(cu - cl, 0)
        y = float(data.y_control[j])
        rows.append(
            DiffRow(
                control_id=data.control_ids[j],
                lower_rows=cl,
                upper_rows=cu,
                outcome=y,
                outcome_sum_lower_only=y * extra_l,
                outcome_sum_upper_only=y * extra_u,
            )
        )
    return AssignmentDiff(
        shared_pairs=shared,
        lower_only_pairs=len(set_l - set_u),
        upper_only_pairs=len(set_u - set_l),
        differing_controls=differing,
        rows=tuple(rows),
    )
