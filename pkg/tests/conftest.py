"""Shared helpers: random instances with paired library and oracle specs.

Every helper draws each constraint number once and feeds the same value
to both the library's QualitySpec and the enumeration OracleSpec, so a
disagreement between solver and oracle can only come from the code under
test, never from mismatched inputs.
"""

from __future__ import annotations

import numpy as np

from matchbounds import (
    Dataset,
    MatchAssignment,
    QualitySpec,
    Unit,
    mahalanobis_distances,
    quantile_grid,
)
from oracles import OracleSpec


def make_dataset(
    rng: np.random.Generator,
    n_treated: int,
    n_control: int,
    n_cov: int = 2,
    with_scores: bool = False,
    discrete_last: bool = False,
) -> Dataset:
    """Random dataset with normal outcomes and covariates.

    With discrete_last the final covariate is 0/1 in both arms, which
    makes exact-match constraints satisfiable.
    """
    units = []
    for arm, count, prefix in ((1, n_treated, "t"), (0, n_control, "c")):
        for idx in range(count):
            cov = [float(v) for v in rng.normal(size=n_cov)]
            if discrete_last and n_cov:
                cov[-1] = float(rng.integers(0, 2))
            units.append(
                Unit(
                    id=f"{prefix}{idx + 1}",
                    outcome=float(rng.normal()),
                    treated=arm,
                    covariates=tuple(cov),
                    score=float(rng.uniform()) if with_scores else None,
                )
            )
    names = tuple(f"x{k + 1}" for k in range(n_cov))
    return Dataset(units, names)


def pairs_to_assignment(data: Dataset, pairs) -> MatchAssignment:
    return MatchAssignment(data.n_treated, data.n_control, pairs)


class Case:
    """One random instance: dataset, metric, grid and the paired specs."""

    def __init__(self, kind, data, dist, grid, props, spec, ospec):
        self.kind = kind
        self.data = data
        self.dist = dist
        self.grid = grid
        self.props = props
        self.spec = spec
        self.ospec = ospec


def _moment_scale(data: Dataset, p: int, k: int) -> float:
    both = np.concatenate([data.x_treated[:, p], data.x_control[:, p]]) ** k
    spread = float(both.std())
    shift = abs(
        float(np.mean(data.x_treated[:, p] ** k))
        - float(np.mean(data.x_control[:, p] ** k))
    )
    return spread + shift + 0.1


def random_case(rng: np.random.Generator, kind: str) -> Case:
    """Random instance for one formulation, mostly feasible by design.

    Sizes stay desk-scale (the variable-match-count program smallest,
    because its oracle enumerates subsets per treated unit).
    """
    if kind == "f3":
        n_t = int(rng.integers(2, 4))
        n_c = int(rng.integers(2, 6))
    else:
        n_t = int(rng.integers(2, 5))
        n_c = int(rng.integers(2, 7))
    discrete = bool(rng.uniform() < 0.25)
    while True:
        data = make_dataset(rng, n_t, n_c, n_cov=2, discrete_last=discrete)
        pooled = np.vstack([data.x_treated, data.x_control])
        if np.all(np.ptp(pooled, axis=0) > 0):
            break
    dist = mahalanobis_distances(data)
    kc = int(rng.integers(1, 3))
    if kind in ("f1", "f3") and n_c * kc < n_t:
        kc = 2 if n_c * 2 >= n_t else n_t

    match_count = None
    if kind == "f4":
        match_count = int(rng.integers(1, min(n_t, n_c * kc) + 1))
    if kind == "f1":
        match_count = n_t

    dbar = float(dist.entries.mean()) + 1e-6
    distance_budget = None
    if rng.uniform() < 0.5:
        scale = float(rng.uniform(0.6, 1.8))
        if kind == "f1":
            distance_budget = scale * n_t * dbar
        elif kind == "f3":
            distance_budget = scale * dbar
        elif kind == "f4":
            distance_budget = scale * match_count * dbar
        else:
            distance_budget = scale * n_t * dbar

    caliper = None
    if rng.uniform() < 0.35:
        caliper = float(
            np.quantile(dist.entries, float(rng.uniform(0.55, 0.95)))
        )

    moment_targets = {}
    if rng.uniform() < 0.6:
        for p in range(data.n_covariates):
            for k in (1, 2):
                if rng.uniform() < 0.7:
                    moment_targets[(p, k)] = float(
                        rng.uniform(0.25, 1.5)
                    ) * _moment_scale(data, p, k)

    props = (0.25, 0.5, 0.75)
    quantile_targets = {}
    grid = None
    if rng.uniform() < 0.4:
        props = ((0.5,), (0.25, 0.75), (0.25, 0.5, 0.75))[int(rng.integers(0, 3))]
        for p in range(data.n_covariates):
            for qi in range(len(props)):
                if rng.uniform() < 0.6:
                    quantile_targets[(p, qi)] = float(rng.uniform(0.2, 0.9))
        if quantile_targets:
            grid = quantile_grid(data, props)
        else:
            props = (0.25, 0.5, 0.75)

    exact_on = ()
    if discrete and rng.uniform() < 0.5:
        exact_on = (data.n_covariates - 1,)

    spec = QualitySpec(
        max_control_reuse=kc,
        match_count=match_count,
        distance_budget=distance_budget,
        caliper=caliper,
        moment_targets=moment_targets,
        quantile_targets=quantile_targets,
        exact_on=exact_on,
    )
    ospec = OracleSpec(
        kc=kc,
        match_count=match_count,
        distance_budget=distance_budget,
        caliper=caliper,
        moment_targets=moment_targets,
        quantile_targets=quantile_targets,
        exact_on=exact_on,
        proportions=props,
    )
    return Case(kind, data, dist, grid, props, spec, ospec)


def oracle_distance_rows(dist) -> list[list[float]]:
    return [list(row) for row in dist.entries]
