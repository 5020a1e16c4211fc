"""Match-quality statistics: distances, moment gaps, quantile gaps.

These functions serve two callers with one set of definitions: profiling a
given assignment, and deriving constraint right-hand sides for the
optimization models. Keeping both on the same formulas is what makes a
baseline assignment feasible at bounds profiled from itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, MatchAssignment
from .errors import ConfigurationError, NumericError, ValidationError

# Condition number above which the pooled covariance gets a ridge.
_COV_CONDITION_LIMIT = 1e12
_COV_RIDGE_SCALE = 1e-8

# Absolute slack on caliper comparisons. A cap derived from the distance
# entries themselves (a quantile, a scaled maximum) can land float-equal to
# an entry up to rounding dust; a pair at that boundary counts as admissible.
CALIPER_SLACK = 1e-9


@dataclass(frozen=True)
class DistanceMatrix:
    """Pairwise treated-by-control distances.

    Attributes:
        entries: Array of shape (n_treated, n_control), finite and >= 0.
        metric_kind: Label of the producing metric.
    """

    entries: np.ndarray
    metric_kind: str

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ValidationError("distance matrix must be two-dimensional")
        if not np.all(np.isfinite(entries)):
            raise ValidationError("distance matrix has non-finite entries")
        if np.any(entries < 0):
            raise ValidationError("distance matrix has negative entries")
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def _pooled_covariance(data: Dataset) -> np.ndarray:
    x = np.vstack([data.x_treated, data.x_control])
    if x.shape[0] < 2:
        raise NumericError("need at least two units to estimate a covariance")
    cov = np.cov(x, rowvar=False, ddof=1)
    return np.atleast_2d(cov)


def mahalanobis_distances(data: Dataset) -> DistanceMatrix:
    """Mahalanobis distances under the pooled (both-arm) covariance.

    The covariance uses all units with ddof=1. When its condition number
    exceeds 1e12 a ridge of 1e-8 * trace(S)/P is added to the diagonal;
    if the matrix is still not positive definite a numeric error names
    the offending covariates.

    Returns:
        DistanceMatrix with metric_kind "mahalanobis".
    """
    cov = _pooled_covariance(data)
    p = cov.shape[0]
    diag = np.diag(cov)
    degenerate = [
        data.covariate_names[k] for k in range(p) if diag[k] <= 1e-30
    ]
    cond = np.linalg.cond(cov) if not degenerate else np.inf
    if cond > _COV_CONDITION_LIMIT:
        ridge = _COV_RIDGE_SCALE * float(np.trace(cov)) / p
        cov = cov + ridge * np.eye(p)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        if degenerate:
            raise NumericError(
                f"covariance is singular; zero-variance covariates: {degenerate}"
            ) from None
        raise NumericError(
            "covariance is singular (collinear covariates); "
            f"condition number {cond:.3e}"
        ) from None
    if degenerate:
        raise NumericError(
            f"covariance is singular; zero-variance covariates: {degenerate}"
        )
    # Whitened coordinates: squared Mahalanobis distance becomes squared
    # Euclidean distance between whitened rows.
    w_t = np.linalg.solve(chol, data.x_treated.T).T
    w_c = np.linalg.solve(chol, data.x_control.T).T
    return DistanceMatrix(_pairwise_euclidean(w_t, w_c), "mahalanobis")


def euclidean_distances(data: Dataset) -> DistanceMatrix:
    """Plain Euclidean distances on raw covariates."""
    return DistanceMatrix(
        _pairwise_euclidean(data.x_treated, data.x_control), "euclidean"
    )


def score_distances(data: Dataset) -> DistanceMatrix:
    """Absolute differences of a precomputed per-unit score column."""
    if not data.has_scores:
        raise ConfigurationError(
            "score distance needs a score column mapped in the dataset"
        )
    d = np.abs(data.score_treated[:, None] - data.score_control[None, :])
    return DistanceMatrix(d, "score-absolute-difference")


def _pairwise_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.clip(sq, 0.0, None, out=sq)
    return np.sqrt(sq)


@dataclass(frozen=True)
class QuantileGrid:
    """Treated-arm quantile anchors for quantile-balance constraints.

    Attributes:
        proportions: Requested proportions h, ascending in (0, 1].
        treated_values: Shape (P, K); type-1 treated quantiles per
            covariate (left-continuous inverse CDF).
        raw_values: Shape (P, K); evaluation points for the two-sided
            indicator form (defaults to the treated quantiles).
        attained_proportions: Shape (P, K); treated empirical CDF at each
            treated quantile. Equals the requested proportion whenever
            h * N^t is an integer; using the attained value as the anchor
            keeps a self-matched assignment at gap exactly zero.
    """

    proportions: tuple[float, ...]
    treated_values: np.ndarray
    raw_values: np.ndarray
    attained_proportions: np.ndarray

    def __post_init__(self) -> None:
        for arr_name in ("treated_values", "raw_values", "attained_proportions"):
            arr = np.asarray(getattr(self, arr_name), dtype=float)
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, arr_name, arr)
        k = len(self.proportions)
        for arr_name in ("treated_values", "raw_values", "attained_proportions"):
            if getattr(self, arr_name).shape[1] != k:
                raise ValidationError(
                    f"{arr_name} must have one column per proportion"
                )

    @property
    def n_points(self) -> int:
        return len(self.proportions)


def quantile_grid(
    data: Dataset, proportions: tuple[float, ...] = (0.25, 0.5, 0.75)
) -> QuantileGrid:
    """Build the treated-arm quantile grid at the given proportions.

    Quantiles use the left-continuous inverse CDF (inf{x : F(x) >= h}),
    so they are always observed treated values and indicator counts
    against them reproduce the attained proportions exactly.
    """
    props = tuple(float(h) for h in proportions)
    if not props:
        raise ValidationError("quantile grid needs at least one proportion")
    if any(h <= 0.0 or h > 1.0 for h in props):
        raise ValidationError("proportions must lie in (0, 1]")
    if list(props) != sorted(set(props)):
        raise ValidationError("proportions must be strictly ascending")
    x_t = data.x_treated
    p = data.n_covariates
    values = np.empty((p, len(props)))
    attained = np.empty((p, len(props)))
    for pi in range(p):
        col = np.sort(x_t[:, pi])
        for qi, h in enumerate(props):
            g = float(np.quantile(col, h, method="inverted_cdf"))
            values[pi, qi] = g
            attained[pi, qi] = float(np.mean(x_t[:, pi] <= g))
    return QuantileGrid(
        proportions=props,
        treated_values=values,
        raw_values=values.copy(),
        attained_proportions=attained,
    )


def _pair_arrays(assignment: MatchAssignment) -> tuple[np.ndarray, np.ndarray]:
    if assignment.n_pairs == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    arr = np.array(assignment.pairs, dtype=int)
    return arr[:, 0], arr[:, 1]


def _per_treated_mean_weights(assignment: MatchAssignment) -> np.ndarray:
    """Weight 1/|matches of i| for each pair, so each treated unit's
    matched controls jointly carry weight one."""
    ti, _ = _pair_arrays(assignment)
    counts = np.array(assignment.per_treated_counts, dtype=float)
    return 1.0 / counts[ti]


def _check_cov_index(data: Dataset, p: int) -> None:
    if not (0 <= p < data.n_covariates):
        raise ValidationError(f"covariate index {p} out of range")


def moment_gap(
    data: Dataset,
    assignment: MatchAssignment,
    p: int,
    k: int,
    estimand_kind: str = "satt",
) -> float:
    """Absolute k-th raw moment imbalance of covariate p.

    satt form: |mean_t(x^k) - (1/N^t) sum_pairs x_c^k| with each pair at
    weight one. ssatt form: |(1/M) sum_pairs (x_t^k - x_c^k)|.
    """
    _check_cov_index(data, p)
    if k < 1:
        raise ValidationError("moment order must be >= 1")
    ti, tj = _pair_arrays(assignment)
    if estimand_kind == "satt":
        treated_term = float(np.mean(data.x_treated[:, p] ** k))
        control_term = float(np.sum(data.x_control[tj, p] ** k)) / data.n_treated
        return abs(treated_term - control_term)
    if estimand_kind == "ssatt":
        if assignment.n_pairs == 0:
            raise ValidationError("ssatt moment gap needs at least one pair")
        diffs = data.x_treated[ti, p] ** k - data.x_control[tj, p] ** k
        return abs(float(np.sum(diffs))) / assignment.n_pairs
    raise ValidationError(f"unknown estimand kind {estimand_kind!r}")


def fractional_moment_gap(
    data: Dataset, assignment: MatchAssignment, p: int, k: int
) -> float:
    """Moment imbalance with each treated unit's matches averaged first.

    This is the satt-side gap for assignments that match with
    replacement: pair (i, j) carries weight 1/|matches of i|, so the
    compared control distribution is the one the per-treated-average
    estimator actually uses. Coincides with :func:`moment_gap` on
    one-to-one complete assignments.
    """
    _check_cov_index(data, p)
    if not assignment.covers_all_treated:
        raise ValidationError("fractional gap needs every treated unit matched")
    _, tj = _pair_arrays(assignment)
    wts = _per_treated_mean_weights(assignment)
    treated_term = float(np.mean(data.x_treated[:, p] ** k))
    control_term = float(np.sum(wts * data.x_control[tj, p] ** k)) / data.n_treated
    return abs(treated_term - control_term)


def quantile_gap(
    data: Dataset,
    assignment: MatchAssignment,
    grid: QuantileGrid,
    p: int,
    estimand_kind: str = "satt",
) -> np.ndarray:
    """Quantile imbalance of covariate p at every grid point.

    satt form: |attained_h - (1/N^t) sum_pairs 1(x_c <= g)| against the
    treated quantiles g. ssatt form:
    |(1/M) sum_pairs (1(x_t <= q) - 1(x_c <= q))| at the raw grid values.
    """
    _check_cov_index(data, p)
    ti, tj = _pair_arrays(assignment)
    if estimand_kind == "satt":
        anchors = grid.attained_proportions[p]
        gs = grid.treated_values[p]
        counts = np.sum(
            data.x_control[tj, p][:, None] <= gs[None, :], axis=0
        ).astype(float)
        return np.abs(anchors - counts / data.n_treated)
    if estimand_kind == "ssatt":
        if assignment.n_pairs == 0:
            raise ValidationError("ssatt quantile gap needs at least one pair")
        qs = grid.raw_values[p]
        ind_t = (data.x_treated[ti, p][:, None] <= qs[None, :]).astype(float)
        ind_c = (data.x_control[tj, p][:, None] <= qs[None, :]).astype(float)
        return np.abs(np.sum(ind_t - ind_c, axis=0)) / assignment.n_pairs
    raise ValidationError(f"unknown estimand kind {estimand_kind!r}")


def fractional_quantile_gap(
    data: Dataset, assignment: MatchAssignment, grid: QuantileGrid, p: int
) -> np.ndarray:
    """Quantile imbalance with per-treated mean weights (see
    :func:`fractional_moment_gap`)."""
    _check_cov_index(data, p)
    if not assignment.covers_all_treated:
        raise ValidationError("fractional gap needs every treated unit matched")
    _, tj = _pair_arrays(assignment)
    wts = _per_treated_mean_weights(assignment)
    anchors = grid.attained_proportions[p]
    gs = grid.treated_values[p]
    ind = (data.x_control[tj, p][:, None] <= gs[None, :]).astype(float)
    counts = ind.T @ wts
    return np.abs(anchors - counts / data.n_treated)


def aggregate_distance(assignment: MatchAssignment, distances: DistanceMatrix) -> float:
    """Total distance over matched pairs."""
    _check_distance_shape(assignment, distances)
    ti, tj = _pair_arrays(assignment)
    return float(np.sum(distances.entries[ti, tj]))


def mean_weighted_distance(
    assignment: MatchAssignment, distances: DistanceMatrix
) -> float:
    """Per-treated mean distances averaged with weights 1/|matches of i|.

    This is the quantity the fractional formulation's distance budget
    bounds; on a one-to-one complete assignment it equals the plain mean
    pair distance.
    """
    _check_distance_shape(assignment, distances)
    if not assignment.covers_all_treated:
        raise ValidationError("weighted distance needs every treated unit matched")
    ti, tj = _pair_arrays(assignment)
    wts = _per_treated_mean_weights(assignment)
    num = float(np.sum(wts * distances.entries[ti, tj]))
    den = float(np.sum(1.0 / np.array(assignment.per_treated_counts, dtype=float)))
    return num / den


def max_pair_distance(
    assignment: MatchAssignment, distances: DistanceMatrix
) -> float:
    """Largest distance among matched pairs (0.0 for an empty assignment)."""
    _check_distance_shape(assignment, distances)
    if assignment.n_pairs == 0:
        return 0.0
    ti, tj = _pair_arrays(assignment)
    return float(np.max(distances.entries[ti, tj]))


def _check_distance_shape(
    assignment: MatchAssignment, distances: DistanceMatrix
) -> None:
    if distances.shape != (assignment.n_treated, assignment.n_control):
        raise ValidationError(
            f"distance matrix shape {distances.shape} does not match "
            f"assignment ({assignment.n_treated}, {assignment.n_control})"
        )


def caliper_mask(distances: DistanceMatrix, caliper: float) -> np.ndarray:
    """Admissibility indicator D: 1 where distance <= caliper, else 0.

    The comparison carries CALIPER_SLACK of absolute tolerance so a pair
    whose distance is float-equal to the cap is admitted.
    """
    if caliper < 0:
        raise ValidationError("caliper must be >= 0")
    return (distances.entries <= caliper + CALIPER_SLACK).astype(int)


@dataclass(frozen=True)
class QualityProfile:
    """Measured match quality of one assignment.

    Attributes:
        estimand_kind: "satt" or "ssatt"; which gap forms were used.
        moment_gaps: {(covariate index, order): gap}.
        quantile_gaps: {(covariate index, grid point index): gap}.
        total_distance: Sum of pair distances, None without a matrix.
        max_pair_distance: Largest pair distance, None without a matrix.
        n_pairs: Number of matched pairs.
    """

    estimand_kind: str
    moment_gaps: dict[tuple[int, int], float]
    quantile_gaps: dict[tuple[int, int], float]
    total_distance: float | None
    max_pair_distance: float | None
    n_pairs: int


def profile_assignment(
    data: Dataset,
    assignment: MatchAssignment,
    distances: DistanceMatrix | None = None,
    grid: QuantileGrid | None = None,
    orders: tuple[int, ...] = (1, 2, 3),
    estimand_kind: str | None = None,
) -> QualityProfile:
    """Measure every supported quality statistic for one assignment.

    When estimand_kind is None it is inferred: one-to-one incomplete
    assignments profile as "ssatt", anything covering all treated units
    as "satt" (on one-to-one complete assignments the two gap families
    coincide, so the choice is immaterial there). Assignments that match
    with replacement use the per-treated-mean satt forms.

    Raises:
        ValidationError: The assignment supports neither estimand.
    """
    if estimand_kind is None:
        if assignment.covers_all_treated:
            estimand_kind = "satt"
        elif assignment.is_one_to_one and assignment.n_pairs > 0:
            estimand_kind = "ssatt"
        else:
            raise ValidationError(
                "assignment supports neither estimand (some treated unmatched "
                "and not one-to-one)"
            )
    if estimand_kind not in ("satt", "ssatt"):
        raise ValidationError(f"unknown estimand kind {estimand_kind!r}")
    if estimand_kind == "satt" and not assignment.covers_all_treated:
        raise ValidationError(
            "satt profile needs every treated unit matched (the estimand is "
            "undefined otherwise)"
        )

    fractional = estimand_kind == "satt" and not assignment.is_one_to_one
    moment_gaps: dict[tuple[int, int], float] = {}
    for p in range(data.n_covariates):
        for k in orders:
            if fractional:
                moment_gaps[(p, k)] = fractional_moment_gap(data, assignment, p, k)
            else:
                moment_gaps[(p, k)] = moment_gap(
                    data, assignment, p, k, estimand_kind
                )
    quantile_gaps: dict[tuple[int, int], float] = {}
    if grid is not None:
        for p in range(data.n_covariates):
            if fractional:
                gaps = fractional_quantile_gap(data, assignment, grid, p)
            else:
                gaps = quantile_gap(data, assignment, grid, p, estimand_kind)
            for qi in range(grid.n_points):
                quantile_gaps[(p, qi)] = float(gaps[qi])
    total = max_d = None
    if distances is not None:
        total = aggregate_distance(assignment, distances)
        max_d = max_pair_distance(assignment, distances)
    return QualityProfile(
        estimand_kind=estimand_kind,
        moment_gaps=moment_gaps,
        quantile_gaps=quantile_gaps,
        total_distance=total,
        max_pair_distance=max_d,
        n_pairs=assignment.n_pairs,
    )


def average_profiles(profiles: list[QualityProfile]) -> QualityProfile:
    """Element-wise mean of several profiles with identical keys.

    Useful when bounds are anchored to the average quality of repeated
    baseline runs rather than a single run.
    """
    if not profiles:
        raise ValidationError("need at least one profile to average")
    first = profiles[0]
    for prof in profiles[1:]:
        if prof.estimand_kind != first.estimand_kind:
            raise ValidationError("profiles mix estimand kinds")
        if set(prof.moment_gaps) != set(first.moment_gaps) or set(
            prof.quantile_gaps
        ) != set(first.quantile_gaps):
            raise ValidationError("profiles have mismatched keys")
        if (prof.total_distance is None) != (first.total_distance is None):
            raise ValidationError("profiles mix distance availability")
    n = len(profiles)

    def _mean_opt(values: list[float | None]) -> float | None:
        if values[0] is None:
            return None
        return float(sum(v for v in values if v is not None)) / n

    return QualityProfile(
        estimand_kind=first.estimand_kind,
        moment_gaps={
            key: sum(p.moment_gaps[key] for p in profiles) / n
            for key in first.moment_gaps
        },
        quantile_gaps={
            key: sum(p.quantile_gaps[key] for p in profiles) / n
            for key in first.quantile_gaps
        },
        total_distance=_mean_opt([p.total_distance for p in profiles]),
        max_pair_distance=_mean_opt([p.max_pair_distance for p in profiles]),
        n_pairs=round(sum(p.n_pairs for p in profiles) / n),
    )
