"""Synthetic data with a known outcome law, plus decomposition diagnostics.

The generator keeps a ledger of the unobserved covariates and noise
draws it used, so the difference between two assignments' estimates can
be split exactly into observed, unobserved and noise channels. The
ledger never travels inside the Dataset; estimation code cannot see it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, MatchAssignment, Unit
from .errors import EstimandUndefinedError, ValidationError


@dataclass(frozen=True)
class SyntheticModel:
    """Outcome and treatment law for generated data.

    Outcome: intercept + beta_observed . x + beta_unobserved . u
    + beta_noise * eps + nonlinearity * sum(x^2)
    + treatment_effect * T, with x, u standard normal and
    eps ~ Normal(0, noise_std).

    Treatment: the n_treated units with the largest
    treat_intercept + treat_weights_observed . x
    + treat_weights_unobserved . u + logistic noise are treated, so
    selection acts on both observed and unobserved covariates.
    """

    beta_observed: tuple[float, ...]
    beta_unobserved: tuple[float, ...] = (1.0,)
    beta_noise: float = 1.0
    intercept: float = 0.0
    treatment_effect: float = 0.0
    noise_std: float = 1.0
    nonlinearity: float = 0.0
    treat_intercept: float = 0.0
    treat_weights_observed: tuple[float, ...] | None = None
    treat_weights_unobserved: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.beta_observed:
            raise ValidationError("need at least one observed covariate")
        if self.noise_std < 0:
            raise ValidationError("noise_std must be >= 0")

    @property
    def n_observed(self) -> int:
        return len(self.beta_observed)

    @property
    def n_unobserved(self) -> int:
        return len(self.beta_unobserved)

    @property
    def is_linear(self) -> bool:
        return self.nonlinearity == 0.0


@dataclass(frozen=True)
class SyntheticLedger:
    """Ground truth withheld from the dataset, aligned to arm row order."""

    model: SyntheticModel
    u_treated: np.ndarray
    u_control: np.ndarray
    eps_treated: np.ndarray
    eps_control: np.ndarray
    treated_ids: tuple[str, ...]
    control_ids: tuple[str, ...]

    def matches(self, data: Dataset) -> bool:
        return (
            self.treated_ids == data.treated_ids
            and self.control_ids == data.control_ids
        )


def generate(
    model: SyntheticModel, n_treated: int, n_control: int, seed: int
) -> tuple[Dataset, SyntheticLedger]:
    """Draw a dataset of n_treated + n_control units.

    Treatment is assigned by ranking the latent selection index and
    taking the top n_treated, so the requested arm sizes are exact.
    """
    if n_treated < 1 or n_control < 1:
        raise ValidationError("need at least one unit per arm")
    rng = np.random.default_rng(seed)
    n = n_treated + n_control
    p = model.n_observed
    x = rng.normal(size=(n, p))
    u = rng.normal(size=(n, model.n_unobserved))
    eps = rng.normal(scale=model.noise_std, size=n) if model.noise_std > 0 else np.zeros(n)

    gx = np.array(
        model.treat_weights_observed
        if model.treat_weights_observed is not None
        else np.ones(p)
    )
    gu = np.array(
        model.treat_weights_unobserved
        if model.treat_weights_unobserved is not None
        else np.ones(model.n_unobserved)
    )
    latent = (
        model.treat_intercept + x @ gx + u @ gu + rng.logistic(size=n)
    )
    order = np.argsort(-latent, kind="stable")
    treated_mask = np.zeros(n, dtype=bool)
    treated_mask[order[:n_treated]] = True

    base = (
        model.intercept
        + x @ np.array(model.beta_observed)
        + u @ np.array(model.beta_unobserved)
        + model.beta_noise * eps
        + model.nonlinearity * np.sum(x * x, axis=1)
    )
    y = base + model.treatment_effect * treated_mask

    units = [
        Unit(
            id=f"u{idx + 1}",
            outcome=float(y[idx]),
            treated=int(treated_mask[idx]),
            covariates=tuple(float(v) for v in x[idx]),
        )
        for idx in range(n)
    ]
    names = tuple(f"x{k + 1}" for k in range(p))
    data = Dataset(units, names)
    t_rows = [idx for idx in range(n) if treated_mask[idx]]
    c_rows = [idx for idx in range(n) if not treated_mask[idx]]
    ledger = SyntheticLedger(
        model=model,
        u_treated=u[t_rows].copy(),
        u_control=u[c_rows].copy(),
        eps_treated=eps[t_rows].copy(),
        eps_control=eps[c_rows].copy(),
        treated_ids=data.treated_ids,
        control_ids=data.control_ids,
    )
    return data, ledger


def _weighted_satt(data: Dataset, assignment: MatchAssignment) -> float:
    """mean(y_t) minus the pair-weighted control mean (weights are the
    per-control total pair counts)."""
    if not assignment.covers_all_treated:
        raise EstimandUndefinedError(
            "decomposition needs every treated unit matched in both assignments"
        )
    counts = assignment.control_use_counts.astype(float)
    total = counts.sum()
    return float(np.mean(data.y_treated) - (data.y_control @ counts) / total)


@dataclass(frozen=True)
class Decomposition:
    """Exact split of the difference between two assignments' estimates.

    The three terms are the observed-covariate, unobserved-covariate
    and noise channels; they plus the residual sum to total, and total
    equals estimate_a - estimate_b. For a linear outcome law the
    residual is exactly 0.0 (assigned, not computed) and total is the
    sum of the three terms.
    """

    estimate_a: float
    estimate_b: float
    term_observed: float
    term_unobserved: float
    term_noise: float
    residual: float
    total: float
    delta_observed: np.ndarray
    delta_unobserved: np.ndarray
    delta_noise: float

    @property
    def measured_difference(self) -> float:
        return self.estimate_a - self.estimate_b


def decompose_difference(
    ledger: SyntheticLedger,
    data: Dataset,
    assignment_a: MatchAssignment,
    assignment_b: MatchAssignment,
) -> Decomposition:
    """Split estimate_a - estimate_b along the generator's channels.

    Both assignments must cover every treated unit. Control units are
    weighted by their total pair counts, normalized by each
    assignment's pair total; the treated side cancels in the
    difference, so only matched-control composition shifts matter.

    Raises:
        ValidationError: The ledger was not generated for this dataset.
        EstimandUndefinedError: Some treated unit is unmatched.
    """
    if not ledger.matches(data):
        raise ValidationError("ledger does not belong to this dataset")
    model = ledger.model

    def control_means(assignment: MatchAssignment):
        counts = assignment.control_use_counts.astype(float)
        total = counts.sum()
        xbar = (data.x_control.T @ counts) / total
        ubar = (ledger.u_control.T @ counts) / total
        ebar = float(ledger.eps_control @ counts) / total
        return xbar, ubar, ebar

    est_a = _weighted_satt(data, assignment_a)
    est_b = _weighted_satt(data, assignment_b)
    xa, ua, ea = control_means(assignment_a)
    xb, ub, eb = control_means(assignment_b)
    beta1 = np.array(model.beta_observed)
    beta2 = np.array(model.beta_unobserved)
    # Higher matched-control outcomes lower the estimate, hence the
    # minus signs: term = -(beta . (mean_a - mean_b)).
    term_obs = -float(beta1 @ (xa - xb))
    term_unobs = -float(beta2 @ (ua - ub))
    term_noise = -model.beta_noise * (ea - eb)
    if model.is_linear:
        residual = 0.0
        total = term_obs + term_unobs + term_noise
    else:
        total = est_a - est_b
        residual = total - (term_obs + term_unobs + term_noise)
    return Decomposition(
        estimate_a=est_a,
        estimate_b=est_b,
        term_observed=term_obs,
        term_unobserved=term_unobs,
        term_noise=term_noise,
        residual=residual,
        total=total,
        delta_observed=xa - xb,
        delta_unobserved=ua - ub,
        delta_noise=ea - eb,
    )


@dataclass(frozen=True)
class NoiseBoundReport:
    """Monte Carlo check of the noise-channel magnitude bound.

    The analytic bound is |beta_noise| * noise_std
    * sqrt(1/n_a + 1/n_b), an upper bound on the expected absolute
    noise term for equal-weight control sets of sizes n_a and n_b
    (valid with overlap, where the shared draws only shrink the
    difference). violated flags an empirical mean more than three
    Monte Carlo standard errors above the bound.
    """

    empirical_mean_abs: float
    analytic_bound: float
    mc_stderr: float
    n_reps: int
    n_a: int
    n_b: int
    overlap: int
    violated: bool


def noise_bound_check(
    model: SyntheticModel,
    n_a: int,
    n_b: int,
    overlap: int = 0,
    n_reps: int = 1000,
    seed: int = 0,
) -> NoiseBoundReport:
    """Resample only the noise and compare the noise term to its bound.

    Covariates, treatment and both assignments stay fixed by
    construction (two equal-weight control sets that share `overlap`
    units); each repetition redraws eps alone.
    """
    if n_a < 1 or n_b < 1:
        raise ValidationError("both control sets need at least one unit")
    if overlap < 0 or overlap > min(n_a, n_b):
        raise ValidationError("overlap must lie in [0, min(n_a, n_b)]")
    if n_reps < 2:
        raise ValidationError("need at least two repetitions")
    pool = n_a + n_b - overlap
    idx_a = np.arange(n_a)
    idx_b = np.arange(n_a - overlap, n_a - overlap + n_b)
    rng = np.random.default_rng(seed)
    eps = rng.normal(scale=model.noise_std, size=(n_reps, pool))
    diff = eps[:, idx_a].mean(axis=1) - eps[:, idx_b].mean(axis=1)
    values = np.abs(model.beta_noise * diff)
    empirical = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(n_reps))
    bound = abs(model.beta_noise) * model.noise_std * float(
        np.sqrt(1.0 / n_a + 1.0 / n_b)
    )
    return NoiseBoundReport(
        empirical_mean_abs=empirical,
        analytic_bound=bound,
        mc_stderr=stderr,
        n_reps=n_reps,
        n_a=n_a,
        n_b=n_b,
        overlap=overlap,
        violated=empirical > bound + 3.0 * stderr,
    )


@dataclass(frozen=True)
class CertifiedInstance:
    """A constructed dataset with two equally balanced, opposite-sign
    assignments.

    Every treated unit has two control twins at identical covariates
    whose outcomes are +magnitude and -magnitude, driven purely by an
    unobserved +/-1 covariate. Any twin choice reproduces the treated
    covariate list exactly, so the first three moment gaps of the two
    assignments are identical (zero), while the estimates are
    -magnitude and +magnitude.
    """

    dataset: Dataset
    ledger: SyntheticLedger
    assignment_low: MatchAssignment
    assignment_high: MatchAssignment
    estimate_low: float
    estimate_high: float
    moment_gaps_low: dict[tuple[int, int], float]
    moment_gaps_high: dict[tuple[int, int], float]


def opposite_sign_instance(
    n_pairs: int = 4, magnitude: float = 1.0, seed: int = 0
) -> CertifiedInstance:
    """Build and certify the twin-control opposite-sign construction.

    Raises:
        ValidationError: magnitude is not positive, or certification
            fails (equal balance or the sign flip does not hold).
    """
    from .balance import moment_gap  # local import avoids a cycle at import time

    if magnitude <= 0:
        raise ValidationError("magnitude must be positive")
    if n_pairs < 2:
        raise ValidationError("need at least two treated units")
    rng = np.random.default_rng(seed)
    x_treated = np.linspace(-1.0, 1.0, n_pairs) + 0.1 * rng.normal(size=n_pairs)
    units = []
    for i in range(n_pairs):
        units.append(
            Unit(
                id=f"t{i + 1}",
                outcome=0.0,
                treated=1,
                covariates=(float(x_treated[i]),),
            )
        )
    for i in range(n_pairs):
        units.append(
            Unit(
                id=f"c{i + 1}p",
                outcome=magnitude,
                treated=0,
                covariates=(float(x_treated[i]),),
            )
        )
        units.append(
            Unit(
                id=f"c{i + 1}m",
                outcome=-magnitude,
                treated=0,
                covariates=(float(x_treated[i]),),
            )
        )
    data = Dataset(units, ("x1",))
    # Control rows alternate plus/minus twins: 2i is +, 2i+1 is -.
    low = MatchAssignment(n_pairs, 2 * n_pairs, [(i, 2 * i) for i in range(n_pairs)])
    high = MatchAssignment(
        n_pairs, 2 * n_pairs, [(i, 2 * i + 1) for i in range(n_pairs)]
    )
    model = SyntheticModel(
        beta_observed=(0.0,),
        beta_unobserved=(magnitude,),
        beta_noise=0.0,
        noise_std=0.0,
    )
    u_control = np.array(
        [[1.0 if k % 2 == 0 else -1.0] for k in range(2 * n_pairs)]
    )
    ledger = SyntheticLedger(
        model=model,
        u_treated=np.zeros((n_pairs, 1)),
        u_control=u_control,
        eps_treated=np.zeros(n_pairs),
        eps_control=np.zeros(2 * n_pairs),
        treated_ids=data.treated_ids,
        control_ids=data.control_ids,
    )
    gaps_low = {}
    gaps_high = {}
    for k in (1, 2, 3):
        gaps_low[(0, k)] = moment_gap(data, low, 0, k, "satt")
        gaps_high[(0, k)] = moment_gap(data, high, 0, k, "satt")
    est_low = _weighted_satt(data, low)
    est_high = _weighted_satt(data, high)
    if gaps_low != gaps_high:
        raise ValidationError("certification failed: balance is not identical")
    if not (est_low < 0.0 < est_high):
        raise ValidationError("certification failed: estimates do not flip sign")
    return CertifiedInstance(
        dataset=data,
        ledger=ledger,
        assignment_low=low,
        assignment_high=high,
        estimate_low=est_low,
        estimate_high=est_high,
        moment_gaps_low=gaps_low,
        moment_gaps_high=gaps_high,
    )
