"""Extremal matching estimates over match-quality constraint sets.

Given a treated/control sample and a set of match-quality requirements
(balance caps, distance budgets, calipers, exact keys), this package
computes the largest and smallest values a matching estimator can take
over every assignment satisfying those requirements, by solving integer
programs with a built-in branch-and-bound solver. It also profiles
match quality, sweeps the requirement tolerances, diffs extreme
assignments, and ships a synthetic-data harness that decomposes
estimate differences into observed, unobserved and noise channels.
"""

from .balance import (
    DistanceMatrix,
    QualityProfile,
    QuantileGrid,
    aggregate_distance,
    average_profiles,
    caliper_mask,
    euclidean_distances,
    fractional_moment_gap,
    fractional_quantile_gap,
    mahalanobis_distances,
    max_pair_distance,
    mean_weighted_distance,
    moment_gap,
    profile_assignment,
    quantile_gap,
    quantile_grid,
    score_distances,
)
from .data import (
    ColumnSchema,
    Dataset,
    EstimateReport,
    MatchAssignment,
    Unit,
    estimate_satt,
    estimate_ssatt,
    load_dataset,
)
from .engine import (
    AssignmentDiff,
    BoundSide,
    BoundsResult,
    DiffRow,
    SlackEntry,
    SweepPoint,
    SweepResult,
    budget_form_for,
    compare_assignments,
    decode_assignment,
    epsilon_sweep,
    greedy_nn_match,
    matching_bounds,
    max_workers,
    spec_from_baseline,
)
from .errors import (
    CapacityError,
    ConfigurationError,
    EstimandUndefinedError,
    MatchboundsError,
    ModelError,
    NumericError,
    ParseError,
    SchemaError,
    ValidationError,
)
from .model import (
    EXACT_MATCH_TOLERANCE,
    FormulationKind,
    LinearConstraint,
    MipModel,
    QualitySpec,
    Variable,
    attach_constraints,
    build_model,
    lp_dump,
)
from .solver import (
    FEASIBILITY_TOL,
    INTEGRALITY_TOL,
    ConstraintViolation,
    Solution,
    SolveOptions,
    solve,
    solve_lp,
)
from .synth import (
    CertifiedInstance,
    Decomposition,
    NoiseBoundReport,
    SyntheticLedger,
    SyntheticModel,
    decompose_difference,
    generate,
    noise_bound_check,
    opposite_sign_instance,
)

__version__ = "0.1.0"

__all__ = [
    "AssignmentDiff",
    "BoundSide",
    "BoundsResult",
    "CapacityError",
    "CertifiedInstance",
    "ColumnSchema",
    "ConfigurationError",
    "ConstraintViolation",
    "Dataset",
    "Decomposition",
    "DiffRow",
    "DistanceMatrix",
    "EXACT_MATCH_TOLERANCE",
    "EstimandUndefinedError",
    "EstimateReport",
    "FEASIBILITY_TOL",
    "FormulationKind",
    "INTEGRALITY_TOL",
    "LinearConstraint",
    "MatchAssignment",
    "MatchboundsError",
    "MipModel",
    "ModelError",
    "NoiseBoundReport",
    "NumericError",
    "ParseError",
    "QualityProfile",
    "QualitySpec",
    "QuantileGrid",
    "SchemaError",
    "SlackEntry",
    "Solution",
    "SolveOptions",
    "SweepPoint",
    "SweepResult",
    "SyntheticLedger",
    "SyntheticModel",
    "Unit",
    "ValidationError",
    "Variable",
    "aggregate_distance",
    "attach_constraints",
    "average_profiles",
    "budget_form_for",
    "build_model",
    "caliper_mask",
    "compare_assignments",
    "decode_assignment",
    "decompose_difference",
    "epsilon_sweep",
    "estimate_satt",
    "estimate_ssatt",
    "euclidean_distances",
    "fractional_moment_gap",
    "fractional_quantile_gap",
    "generate",
    "greedy_nn_match",
    "load_dataset",
    "lp_dump",
    "mahalanobis_distances",
    "matching_bounds",
    "max_pair_distance",
    "max_workers",
    "mean_weighted_distance",
    "moment_gap",
    "noise_bound_check",
    "opposite_sign_instance",
    "profile_assignment",
    "quantile_gap",
    "quantile_grid",
    "score_distances",
    "solve",
    "solve_lp",
    "spec_from_baseline",
    "__version__",
]
