"""Mixed-integer solver: branch and bound over a dense revised simplex.

The LP kernel is a two-phase bounded-variable revised simplex with an
explicit basis inverse (eta updates, periodic refactorization). Phase 1
drives artificial columns out through the same iteration loop phase 2
uses. Pricing is Dantzig (most negative reduced cost) with a permanent
switch to Bland's rule after a stall, which guarantees termination.

Branch and bound is depth-first with most-fractional branching and a
periodic best-bound reordering of the open-node list. Every node is
solved from scratch; nothing is warm-started, so a solve is a pure
function of the model and options.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, NumericError, ValidationError
from .model import MipModel

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2

FEASIBILITY_TOL = 1e-7
INTEGRALITY_TOL = 1e-6
_DUAL_TOL = 1e-9
_PIVOT_TOL = 1e-9
_RATIO_TIE_TOL = 1e-9
_REFACTOR_EVERY = 64
_RESORT_EVERY = 256
# Per-node pruning slack; kept far below the reporting gap so near-ties
# are explored rather than silently dropped.
_PRUNE_SLACK = 1e-11


@dataclass(frozen=True)
class SolveOptions:
    """Solver controls.

    Attributes:
        mode: "exact" for branch and bound, "relax-and-round" to solve
            the relaxation once and round the integer columns at 0.5
            (exact halves round up).
        time_limit: Wall-clock seconds before returning the incumbent.
        absolute_gap: Terminate when incumbent minus best open bound is
            at most this; None means 1e-9 * (1 + |incumbent|).
        node_limit: Maximum branch-and-bound nodes to process.
        branch_rule: "most-fractional" (ties at the lowest column) or
            "first-fractional".
        seed: Recorded for artifact bookkeeping. The algorithm is
            deterministic and never draws randomness.
    """

    mode: str = "exact"
    time_limit: float | None = None
    absolute_gap: float | None = None
    node_limit: int | None = None
    branch_rule: str = "most-fractional"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "relax-and-round"):
            raise ValidationError(f"unknown solve mode {self.mode!r}")
        if self.branch_rule not in ("most-fractional", "first-fractional"):
            raise ValidationError(f"unknown branch rule {self.branch_rule!r}")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValidationError("time_limit must be positive")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValidationError("node_limit must be >= 1")
        if self.absolute_gap is not None and self.absolute_gap < 0:
            raise ValidationError("absolute_gap must be >= 0")


@dataclass(frozen=True)
class ConstraintViolation:
    """A rounded solution's excess on one model row."""

    row_index: int
    name: str
    label: str
    amount: float


@dataclass
class Solution:
    """Solver outcome.

    status is one of "optimal", "feasible-with-gap", "infeasible",
    "limit-reached". values holds one entry per model column (empty for
    infeasible results). best_bound brackets the true optimum from the
    relaxation side; for status "optimal" it is within the gap of
    objective. constraint_violations is only populated by
    relax-and-round.
    """

    status: str
    objective: float | None
    best_bound: float | None
    values: np.ndarray
    nodes_explored: int = 0
    lp_iterations: int = 0
    constraint_violations: list[ConstraintViolation] = field(default_factory=list)

    @property
    def is_feasible(self) -> bool:
        return self.status in ("optimal", "feasible-with-gap") or (
            self.status == "limit-reached" and self.objective is not None
        )


class _Prepared:
    """Model lowered to dense arrays (internal minimize sense).

    Singleton rows are folded into variable bounds before the simplex
    sees them, which is what removes caliper- and exact-fixed columns.
    """

    def __init__(self, model: MipModel):
        n = model.n_variables
        self.n = n
        self.flip = 1.0 if model.sense == "min" else -1.0
        self.offset = model.objective_offset
        c = np.zeros(n)
        for col, coef in model.objective.items():
            c[col] += coef
        self.c = self.flip * c
        self.lower = np.array([v.lower for v in model.variables], dtype=float)
        self.upper = np.array([v.upper for v in model.variables], dtype=float)
        self.int_cols = np.array(
            [k for k, v in enumerate(model.variables) if v.is_integer], dtype=int
        )
        self.bound_conflict = False

        rows: list[np.ndarray] = []
        senses: list[str] = []
        rhs: list[float] = []
        for row in model.constraints:
            nz = [(col, coef) for col, coef in row.coeffs if coef != 0.0]
            if not nz:
                if not _zero_row_ok(row.sense, row.rhs):
                    self.bound_conflict = True
                continue
            if len(nz) == 1:
                col, coef = nz[0]
                self._fold_singleton(col, coef, row.sense, row.rhs)
                continue
            dense = np.zeros(n)
            for col, coef in nz:
                dense[col] += coef
            rows.append(dense)
            senses.append(row.sense)
            rhs.append(float(row.rhs))
        self.A = np.array(rows) if rows else np.zeros((0, n))
        self.senses = senses
        self.b = np.array(rhs, dtype=float)
        if np.any(self.lower > self.upper + FEASIBILITY_TOL):
            self.bound_conflict = True
        # Snap tiny crossings introduced by folding.
        self.upper = np.maximum(self.upper, self.lower)

    def _fold_singleton(self, col: int, coef: float, sense: str, rhs: float) -> None:
        bound = rhs / coef
        if sense == "=":
            self.lower[col] = max(self.lower[col], bound)
            self.upper[col] = min(self.upper[col], bound)
        elif (sense == "<=") == (coef > 0):
            self.upper[col] = min(self.upper[col], bound)
        else:
            self.lower[col] = max(self.lower[col], bound)


def _zero_row_ok(sense: str, rhs: float) -> bool:
    if sense == "<=":
        return rhs >= -FEASIBILITY_TOL
    if sense == ">=":
        return rhs <= FEASIBILITY_TOL
    return abs(rhs) <= FEASIBILITY_TOL


class _LpResult:
    __slots__ = ("status", "x", "objective", "iterations")

    def __init__(self, status: str, x: np.ndarray | None, objective: float, iterations: int):
        self.status = status
        self.x = x
        self.objective = objective
        self.iterations = iterations


class _Simplex:
    """One bounded-variable LP: minimize c @ x, A x (sense) b, l <= x <= u."""

    def __init__(self, prep: _Prepared, lower: np.ndarray, upper: np.ndarray):
        m = prep.A.shape[0]
        n = prep.n
        self.m = m
        self.n = n
        # Slack column per row: <= gets [0, inf), >= gets (-inf, 0],
        # = gets [0, 0]; then A x + s = b holds as an equation.
        slack_lb = np.empty(m)
        slack_ub = np.empty(m)
        for r, sense in enumerate(prep.senses):
            if sense == "<=":
                slack_lb[r], slack_ub[r] = 0.0, np.inf
            elif sense == ">=":
                slack_lb[r], slack_ub[r] = -np.inf, 0.0
            else:
                slack_lb[r], slack_ub[r] = 0.0, 0.0
        self.A = np.hstack([prep.A, np.eye(m)]) if m else np.zeros((0, n))
        self.lb = np.concatenate([lower, slack_lb])
        self.ub = np.concatenate([upper, slack_ub])
        self.b = prep.b.copy()
        self.cost = np.concatenate([prep.c, np.zeros(m)])
        self.iterations = 0
        self.art_cols: list[int] = []

    def solve(self) -> _LpResult:
        m, n = self.m, self.n
        x = np.where(
            np.isfinite(self.lb),
            self.lb,
            np.where(np.isfinite(self.ub), self.ub, 0.0),
        )[:n]
        stat = np.where(
            np.isfinite(self.lb[:n]), AT_LOWER, AT_UPPER
        ).astype(np.int8)
        if m == 0:
            # Pure bound problem: each variable sits at its cheaper bound.
            x_opt = np.where(self.cost[:n] > 0, self.lb[:n], self.ub[:n])
            x_opt = np.where(np.isfinite(x_opt), x_opt, 0.0)
            obj = float(self.cost[:n] @ x_opt)
            return _LpResult("optimal", x_opt, obj, 0)

        s = self.b - self.A[:, :n] @ x
        full_x = np.concatenate([x, np.zeros(m)])
        full_stat = np.concatenate([stat, np.full(m, BASIC, dtype=np.int8)])
        basis = n + np.arange(m)
        art_sign = np.zeros(m)
        for r in range(m):
            lo, hi = self.lb[n + r], self.ub[n + r]
            if s[r] > hi + 1e-12:
                full_x[n + r] = hi
                full_stat[n + r] = AT_UPPER
                art_sign[r] = 1.0
            elif s[r] < lo - 1e-12:
                full_x[n + r] = lo
                full_stat[n + r] = AT_LOWER
                art_sign[r] = -1.0
            else:
                full_x[n + r] = s[r]

        art_rows = np.nonzero(art_sign)[0]
        if art_rows.size:
            art_block = np.zeros((m, art_rows.size))
            for k, r in enumerate(art_rows):
                art_block[r, k] = art_sign[r]
            self.A = np.hstack([self.A, art_block])
            residual = s[art_rows] - full_x[n + art_rows]
            art_vals = residual * art_sign[art_rows]
            self.lb = np.concatenate([self.lb, np.zeros(art_rows.size)])
            self.ub = np.concatenate([self.ub, np.full(art_rows.size, np.inf)])
            self.cost = np.concatenate([self.cost, np.zeros(art_rows.size)])
            full_x = np.concatenate([full_x, art_vals])
            full_stat = np.concatenate(
                [full_stat, np.full(art_rows.size, BASIC, dtype=np.int8)]
            )
            for k, r in enumerate(art_rows):
                basis[r] = n + m + k
            self.art_cols = list(range(n + m, n + m + art_rows.size))

        self.x = full_x
        self.stat = full_stat
        self.basis = basis
        self.binv = None
        self._refactor()

        if self.art_cols:
            phase1 = np.zeros(self.A.shape[1])
            phase1[self.art_cols] = 1.0
            status = self._iterate(phase1)
            if status == "unbounded":
                raise ModelError("phase-1 subproblem reported unbounded")
            art_total = float(np.sum(self.x[self.art_cols]))
            if art_total > FEASIBILITY_TOL:
                return _LpResult("infeasible", None, np.inf, self.iterations)
            # Pin artificials at zero for phase 2.
            for col in self.art_cols:
                self.lb[col] = 0.0
                self.ub[col] = 0.0
                self.x[col] = 0.0

        status = self._iterate(self.cost)
        if status == "unbounded":
            raise ModelError(
                "LP relaxation is unbounded; every model variable should be boxed"
            )
        self._refresh()
        x_struct = self.x[: self.n].copy()
        np.clip(x_struct, self.lb[: self.n], self.ub[: self.n], out=x_struct)
        if not self._feasible_enough():
            raise NumericError("simplex finished outside feasibility tolerance")
        obj = float(self.cost[: self.n] @ x_struct)
        return _LpResult("optimal", x_struct, obj, self.iterations)

    def _refactor(self) -> None:
        base = self.A[:, self.basis]
        try:
            self.binv = np.linalg.inv(base)
        except np.linalg.LinAlgError:
            raise NumericError("singular basis during refactorization") from None

    def _refresh(self) -> None:
        """Recompute basic values from the nonbasic ones."""
        self._refactor()
        x_nb = self.x.copy()
        x_nb[self.basis] = 0.0
        self.x[self.basis] = self.binv @ (self.b - self.A @ x_nb)

    def _feasible_enough(self) -> bool:
        if np.any(self.x < self.lb - FEASIBILITY_TOL) or np.any(
            self.x > self.ub + FEASIBILITY_TOL
        ):
            return False
        resid = self.A @ self.x - self.b
        return bool(np.max(np.abs(resid), initial=0.0) <= FEASIBILITY_TOL)

    def _iterate(self, cost: np.ndarray) -> str:
        m = self.m
        ncols = self.A.shape[1]
        bland = False
        stall = 0
        stall_limit = 100 + 2 * (m + ncols)
        hard_limit = 400 * (m + ncols) + 20000
        dual_tol = _DUAL_TOL * (1.0 + float(np.max(np.abs(cost), initial=0.0)))
        pivots_since_refactor = 0
        free_range = (self.ub - self.lb) > 0

        for _ in range(hard_limit):
            y = self.binv.T @ cost[self.basis]
            d = cost - y @ self.A
            nonbasic = self.stat != BASIC
            candidates = nonbasic & free_range & (
                ((self.stat == AT_LOWER) & (d < -dual_tol))
                | ((self.stat == AT_UPPER) & (d > dual_tol))
            )
            if not np.any(candidates):
                return "optimal"
            idx = np.nonzero(candidates)[0]
            if bland:
                q = int(idx[0])
            else:
                q = int(idx[np.argmax(np.abs(d[idx]))])
            sigma = 1.0 if self.stat[q] == AT_LOWER else -1.0
            alpha = self.binv @ self.A[:, q]

            sa = sigma * alpha
            xb = self.x[self.basis]
            lb_b = self.lb[self.basis]
            ub_b = self.ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = np.where(sa > _PIVOT_TOL, (xb - lb_b) / sa, np.inf)
                inc = np.where(sa < -_PIVOT_TOL, (ub_b - xb) / (-sa), np.inf)
            ratios = np.minimum(dec, inc)
            ratios = np.where(np.isnan(ratios), np.inf, ratios)
            np.clip(ratios, 0.0, None, out=ratios)
            rmin = float(np.min(ratios)) if m else np.inf
            t_bound = self.ub[q] - self.lb[q]

            if t_bound <= rmin + _RATIO_TIE_TOL:
                if not np.isfinite(t_bound):
                    return "unbounded"
                # Bound flip: the entering variable crosses to its other
                # bound without a basis change.
                self.x[self.basis] = xb - t_bound * sa
                self.x[q] = self.ub[q] if sigma > 0 else self.lb[q]
                self.stat[q] = AT_UPPER if sigma > 0 else AT_LOWER
                self.iterations += 1
                stall = stall + 1 if t_bound <= 1e-12 else 0
            else:
                if not np.isfinite(rmin):
                    return "unbounded"
                tied = np.nonzero(ratios <= rmin + _RATIO_TIE_TOL)[0]
                if bland:
                    leave = int(tied[np.argmin(self.basis[tied])])
                else:
                    best = np.abs(alpha[tied])
                    leave = int(tied[np.argmax(best)])
                t = float(ratios[leave])
                leaving_col = int(self.basis[leave])
                self.x[self.basis] = xb - t * sa
                self.x[q] = (
                    (self.lb[q] if sigma > 0 else self.ub[q]) + sigma * t
                )
                hit_upper = sa[leave] < 0
                self.x[leaving_col] = (
                    self.ub[leaving_col] if hit_upper else self.lb[leaving_col]
                )
                self.stat[leaving_col] = AT_UPPER if hit_upper else AT_LOWER
                self.stat[q] = BASIC
                self.basis[leave] = q
                # Eta update of the explicit inverse.
                piv = alpha[leave]
                if abs(piv) < 1e-12:
                    raise NumericError("vanishing pivot element")
                row = self.binv[leave] / piv
                self.binv -= np.outer(alpha, row)
                self.binv[leave] = row
                self.iterations += 1
                pivots_since_refactor += 1
                if pivots_since_refactor >= _REFACTOR_EVERY:
                    self._refresh()
                    pivots_since_refactor = 0
                stall = stall + 1 if t <= 1e-12 else 0

            if stall > stall_limit and not bland:
                bland = True
        raise NumericError("simplex iteration limit exceeded")


def _lp_relaxation(
    prep: _Prepared, lower: np.ndarray, upper: np.ndarray
) -> _LpResult:
    if np.any(lower > upper + FEASIBILITY_TOL):
        return _LpResult("infeasible", None, np.inf, 0)
    simplex = _Simplex(prep, lower, np.maximum(upper, lower))
    return simplex.solve()


def solve_lp(model: MipModel, options: SolveOptions | None = None) -> Solution:
    """Solve the LP relaxation (integrality dropped).

    Returns:
        Solution with user-sense objective; best_bound equals the
        objective because the relaxation is solved to optimality.
    """
    prep = _Prepared(model)
    if prep.bound_conflict:
        return Solution("infeasible", None, None, np.empty(0))
    result = _lp_relaxation(prep, prep.lower, prep.upper)
    if result.status == "infeasible":
        return Solution(
            "infeasible", None, None, np.empty(0), lp_iterations=result.iterations
        )
    objective = prep.flip * result.objective + prep.offset
    return Solution(
        status="optimal",
        objective=objective,
        best_bound=objective,
        values=result.x,
        lp_iterations=result.iterations,
    )


def _snap_integers(prep: _Prepared, x: np.ndarray) -> np.ndarray:
    snapped = x.copy()
    if prep.int_cols.size:
        snapped[prep.int_cols] = np.round(snapped[prep.int_cols])
    return snapped


def _fractional_columns(prep: _Prepared, x: np.ndarray) -> np.ndarray:
    if not prep.int_cols.size:
        return np.empty(0, dtype=int)
    vals = x[prep.int_cols]
    frac = np.abs(vals - np.round(vals))
    return prep.int_cols[frac > INTEGRALITY_TOL]


def solve(model: MipModel, options: SolveOptions | None = None) -> Solution:
    """Solve a model to integer optimality or by relax-and-round.

    Exact mode runs branch and bound until the incumbent is within the
    absolute gap of the best open bound (or a time/node limit fires).
    Relax-and-round solves the relaxation once, rounds integer columns
    at 0.5, repairs nothing, and reports every violated row.
    """
    options = options or SolveOptions()
    if options.mode == "relax-and-round":
        return _relax_and_round(model, options)
    return _branch_and_bound(model, options)


def _relax_and_round(model: MipModel, options: SolveOptions) -> Solution:
    prep = _Prepared(model)
    if prep.bound_conflict:
        return Solution("infeasible", None, None, np.empty(0))
    root = _lp_relaxation(prep, prep.lower, prep.upper)
    if root.status == "infeasible":
        return Solution(
            "infeasible", None, None, np.empty(0), lp_iterations=root.iterations
        )
    x = root.x.copy()
    fractional = _fractional_columns(prep, x)
    if prep.int_cols.size:
        # Round at one half; exact halves go up.
        x[prep.int_cols] = np.floor(x[prep.int_cols] + 0.5)
    violations = []
    for r, row in enumerate(model.constraints):
        amount = row.violation(x)
        if amount > FEASIBILITY_TOL:
            violations.append(ConstraintViolation(r, row.name, row.label, amount))
    objective = model.objective_value(x)
    relax_bound = prep.flip * root.objective + prep.offset
    clean = not violations and fractional.size == 0
    return Solution(
        status="optimal" if clean else "feasible-with-gap",
        objective=objective,
        best_bound=relax_bound,
        values=x,
        lp_iterations=root.iterations,
        constraint_violations=violations,
    )


def _branch_and_bound(model: MipModel, options: SolveOptions) -> Solution:
    prep = _Prepared(model)
    if prep.bound_conflict:
        return Solution("infeasible", None, None, np.empty(0))
    started = time.monotonic()
    nodes = 0
    iterations = 0
    incumbent_x: np.ndarray | None = None
    incumbent_obj = np.inf
    prune_floor = np.inf

    def gap_allow() -> float:
        if options.absolute_gap is not None:
            return options.absolute_gap
        ref = 0.0 if not np.isfinite(incumbent_obj) else abs(incumbent_obj)
        return 1e-9 * (1.0 + ref)

    # Node: (lower bounds, upper bounds, parent relaxation bound).
    stack: list[tuple[np.ndarray, np.ndarray, float]] = [
        (prep.lower.copy(), prep.upper.copy(), -np.inf)
    ]
    status = "optimal"
    while stack:
        open_bound = min(pb for _, _, pb in stack)
        if incumbent_x is not None and incumbent_obj - open_bound <= gap_allow():
            prune_floor = min(prune_floor, open_bound)
            break
        if options.time_limit is not None and (
            time.monotonic() - started > options.time_limit
        ):
            status = "limit-reached"
            prune_floor = min(prune_floor, open_bound)
            break
        if options.node_limit is not None and nodes >= options.node_limit:
            status = "limit-reached"
            prune_floor = min(prune_floor, open_bound)
            break
        if nodes and nodes % _RESORT_EVERY == 0:
            stack.sort(key=lambda item: -item[2])
        lower, upper, parent_bound = stack.pop()
        if incumbent_x is not None and parent_bound >= incumbent_obj - _PRUNE_SLACK * (
            1.0 + abs(incumbent_obj)
        ):
            prune_floor = min(prune_floor, parent_bound)
            continue
        nodes += 1
        result = _lp_relaxation(prep, lower, upper)
        iterations += result.iterations
        if result.status == "infeasible":
            continue
        node_bound = result.objective
        if incumbent_x is not None and node_bound >= incumbent_obj - _PRUNE_SLACK * (
            1.0 + abs(incumbent_obj)
        ):
            prune_floor = min(prune_floor, node_bound)
            continue
        fractional = _fractional_columns(prep, result.x)
        if fractional.size == 0:
            snapped = _snap_integers(prep, result.x)
            cand_obj = float(prep.c @ snapped)
            if cand_obj < incumbent_obj:
                incumbent_obj = cand_obj
                incumbent_x = snapped
            continue
        if options.branch_rule == "first-fractional":
            branch_col = int(fractional[0])
        else:
            vals = result.x[fractional]
            dist = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
            branch_col = int(fractional[np.argmax(dist)])
        val = result.x[branch_col]
        down_upper = upper.copy()
        down_upper[branch_col] = np.floor(val)
        up_lower = lower.copy()
        up_lower[branch_col] = np.ceil(val)
        down = (lower.copy(), down_upper, node_bound)
        up = (up_lower, upper.copy(), node_bound)
        # Explore the branch nearest the relaxation value first.
        if val - np.floor(val) >= 0.5:
            stack.append(down)
            stack.append(up)
        else:
            stack.append(up)
            stack.append(down)

    if incumbent_x is None:
        if status == "limit-reached":
            return Solution(
                "limit-reached",
                None,
                prep.flip * prune_floor + prep.offset
                if np.isfinite(prune_floor)
                else None,
                np.empty(0),
                nodes_explored=nodes,
                lp_iterations=iterations,
            )
        return Solution(
            "infeasible",
            None,
            None,
            np.empty(0),
            nodes_explored=nodes,
            lp_iterations=iterations,
        )

    bound_internal = min(incumbent_obj, prune_floor)
    objective = prep.flip * incumbent_obj + prep.offset
    best_bound = prep.flip * bound_internal + prep.offset
    return Solution(
        status=status,
        objective=objective,
        best_bound=best_bound,
        values=incumbent_x,
        nodes_explored=nodes,
        lp_iterations=iterations,
    )
