"""Acceptance gate: one test per shipped guarantee.

Each test prints a single [PASS] line with its instance counts when it
succeeds; a failure reads as the usual pytest report for that criterion.
"""

import csv
import json
import os
import time

import numpy as np
import pytest

from matchbounds import (
    CapacityError,
    Dataset,
    FormulationKind,
    MatchAssignment,
    SolveOptions,
    SyntheticModel,
    Unit,
    budget_form_for,
    build_model,
    decompose_difference,
    epsilon_sweep,
    estimate_satt,
    estimate_ssatt,
    generate,
    greedy_nn_match,
    mahalanobis_distances,
    matching_bounds,
    noise_bound_check,
    opposite_sign_instance,
    solve,
    solve_lp,
    spec_from_baseline,
)
from matchbounds.cli import main as cli_main
from matchbounds.solver import FEASIBILITY_TOL, INTEGRALITY_TOL
from conftest import make_dataset, oracle_distance_rows, pairs_to_assignment, random_case
from oracles import enumerate_bounds

ALL_KINDS = ("f1", "f3", "f4", "f5")


def _verified_against_enumeration(rng, kind_str, need, max_draws):
    """Draw random instances until `need` feasible ones are verified.

    Every draw is checked: feasible instances must match the exhaustive
    enumeration on both bound senses within 1e-9, infeasible ones must
    be reported as such by the solver too.
    """
    kind = FormulationKind.from_string(kind_str)
    n_feasible = 0
    n_infeasible = 0
    draws = 0
    while n_feasible < need:
        draws += 1
        assert draws <= max_draws, f"{kind_str}: not enough feasible draws"
        case = random_case(rng, kind_str)
        d = oracle_distance_rows(case.dist) if case.dist is not None else None
        want = enumerate_bounds(kind_str, case.data, case.ospec, d, case.props)
        try:
            result = matching_bounds(
                case.data,
                case.spec,
                kind,
                distances=case.dist,
                grid=case.grid,
            )
        except CapacityError:
            assert want is None, f"{kind_str}: capacity refusal on a feasible case"
            n_infeasible += 1
            continue
        if want is None:
            assert not result.feasible, (
                f"{kind_str}: solver found a solution on an instance the "
                "enumeration proves infeasible"
            )
            n_infeasible += 1
            continue
        assert result.feasible, (
            f"{kind_str}: solver reported infeasible, enumeration found "
            f"bounds {want[:2]}"
        )
        assert result.lower.estimate.estimate == pytest.approx(
            want[0], abs=1e-9
        ), f"{kind_str}: lower bound mismatch"
        assert result.upper.estimate.estimate == pytest.approx(
            want[1], abs=1e-9
        ), f"{kind_str}: upper bound mismatch"
        n_feasible += 1
    return n_feasible, n_infeasible


def test_criterion_1_oracle_equivalence():
    """Exact-mode bounds equal exhaustive enumeration within 1e-9."""
    started = time.monotonic()
    counts = {}
    for kind_str in ALL_KINDS:
        rng = np.random.default_rng(90_000 + ALL_KINDS.index(kind_str))
        counts[kind_str] = _verified_against_enumeration(
            rng, kind_str, need=200, max_draws=2000
        )
    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"runtime budget exceeded: {elapsed:.1f}s"
    detail = ", ".join(
        f"{k}: {feas} feasible + {inf} infeasible verified"
        for k, (feas, inf) in counts.items()
    )
    print(
        f"[PASS] criterion 1 (oracle equivalence): {detail}; "
        f"{elapsed:.1f}s total"
    )


def test_criterion_2_linearization_exactness():
    """The linearized variable-match-count program equals direct
    enumeration of the fractional objective over match subsets."""
    rng = np.random.default_rng(91_000)
    feas, inf = _verified_against_enumeration(rng, "f3", need=100, max_draws=1000)
    print(
        "[PASS] criterion 2 (linearization exactness): "
        f"{feas} feasible + {inf} infeasible instances agree within 1e-9"
    )


def _clone_fixture(n_treated, n_decoys, gap, seed):
    """Each treated unit has one zero-distance clone control whose
    outcome sits exactly `gap` below it, plus off-support decoys."""
    rng = np.random.default_rng(seed)
    x = np.round(rng.normal(size=n_treated), 6)
    y = np.round(rng.normal(size=n_treated), 6)
    units = [
        Unit(id=f"t{i + 1}", outcome=float(y[i]), treated=1, covariates=(float(x[i]),))
        for i in range(n_treated)
    ]
    units += [
        Unit(
            id=f"c{i + 1}",
            outcome=float(y[i] - gap),
            treated=0,
            covariates=(float(x[i]),),
        )
        for i in range(n_treated)
    ]
    units += [
        Unit(
            id=f"d{k + 1}",
            outcome=float(rng.normal()),
            treated=0,
            covariates=(float(x[k % n_treated] + 2.0 + k),),
        )
        for k in range(n_decoys)
    ]
    data = Dataset(units, ("x1",))
    baseline = pairs_to_assignment(data, [(i, i) for i in range(n_treated)])
    return data, baseline


def test_criterion_3_bracketing_and_zero_eps_collapse():
    """Zero-tolerance anchored bounds contain the baseline estimate, and
    collapse to zero width when the baseline is uniquely optimal."""
    # Part A: bracketing at epsilon 0 for arbitrary random baselines.
    rng = np.random.default_rng(92_000)
    n_bracketed = 0
    for trial in range(60):
        kind_str = ALL_KINDS[trial % 4]
        kind = FormulationKind.from_string(kind_str)
        if kind_str == "f3":
            n_t, n_c = int(rng.integers(2, 4)), int(rng.integers(3, 6))
        else:
            n_t, n_c = int(rng.integers(2, 5)), int(rng.integers(3, 7))
        data = make_dataset(rng, n_t, n_c)
        dist = mahalanobis_distances(data)
        if kind.estimand_kind == "satt":
            pairs = [(i, int(rng.integers(0, n_c))) for i in range(n_t)]
        else:
            m = int(rng.integers(1, n_t + 1))
            rows = rng.permutation(n_t)[:m]
            cols = rng.permutation(n_c)[:m]
            pairs = [(int(i), int(j)) for i, j in zip(sorted(rows), cols)]
        baseline = pairs_to_assignment(data, pairs)
        spec = spec_from_baseline(
            data,
            baseline,
            dist,
            orders=(1, 2),
            tolerance=0.0,
            estimand_kind=kind.estimand_kind,
            distance_form=budget_form_for(kind),
        )
        result = matching_bounds(data, spec, kind, distances=dist)
        assert result.feasible, f"{kind_str}: anchored instance infeasible"
        if kind.estimand_kind == "satt":
            base = estimate_satt(data, baseline).estimate
        else:
            base = estimate_ssatt(data, baseline).estimate
        assert result.lower.estimate.estimate <= base + 1e-9
        assert result.upper.estimate.estimate >= base - 1e-9
        n_bracketed += 1

    # Part B: a fixture whose baseline is the unique quality-optimal
    # assignment collapses to a single point at epsilon 0.
    n_collapsed = 0
    for kind_str in ALL_KINDS:
        kind = FormulationKind.from_string(kind_str)
        data, baseline = _clone_fixture(4, 3, gap=0.37, seed=7)
        dist = mahalanobis_distances(data)
        spec = spec_from_baseline(
            data,
            baseline,
            dist,
            orders=(1, 2),
            tolerance=0.0,
            estimand_kind=kind.estimand_kind,
            distance_form=budget_form_for(kind),
        )
        result = matching_bounds(data, spec, kind, distances=dist)
        assert result.feasible, f"{kind_str}: collapse fixture infeasible"
        if kind.estimand_kind == "satt":
            base = estimate_satt(data, baseline).estimate
        else:
            base = estimate_ssatt(data, baseline).estimate
        assert abs(result.width) <= 1e-9, f"{kind_str}: width {result.width}"
        assert result.lower.estimate.estimate == pytest.approx(base, abs=1e-9)
        assert result.upper.estimate.estimate == pytest.approx(base, abs=1e-9)
        n_collapsed += 1
    print(
        "[PASS] criterion 3 (bracketing + zero-eps collapse): "
        f"{n_bracketed} random baselines bracketed, "
        f"{n_collapsed} formulations collapse on the unique fixture"
    )


def test_criterion_4_interval_nesting_across_epsilon():
    """Interval widths are weakly increasing along the tolerance grid,
    with zero tolerance on the ordering (exact mode)."""
    grid_eps = (0.0, 0.2, 0.4, 0.6, 0.9, 1.0)
    rng = np.random.default_rng(93_000)
    n_checked = 0
    trial = 0
    while n_checked < 50:
        trial += 1
        assert trial < 300, "not enough sweepable instances"
        kind_str = ALL_KINDS[trial % 4]
        kind = FormulationKind.from_string(kind_str)
        if kind_str == "f3":
            n_t, n_c = int(rng.integers(2, 4)), int(rng.integers(3, 6))
        else:
            n_t, n_c = int(rng.integers(2, 5)), int(rng.integers(4, 7))
        data = make_dataset(rng, n_t, n_c)
        dist = mahalanobis_distances(data)
        baseline = greedy_nn_match(data, dist)
        sweep = epsilon_sweep(
            data,
            baseline,
            grid_eps,
            kind,
            dist,
            orders=(1, 2),
            match_count=baseline.n_pairs if kind is FormulationKind.F4 else None,
        )
        widths = []
        for pt in sweep.points:
            assert pt.result.feasible, (
                f"{kind_str}: anchored sweep point eps={pt.epsilon} infeasible"
            )
            widths.append(pt.result.width)
        for a, b in zip(widths, widths[1:]):
            assert b >= a, f"{kind_str}: widths {widths} not weakly increasing"
        n_checked += 1
    print(
        "[PASS] criterion 4 (interval nesting): "
        f"{n_checked} instances, widths weakly increasing over "
        f"grid {grid_eps} with zero ordering tolerance"
    )


def test_criterion_5_opposite_sign_straddle():
    """A certified equal-balance instance yields bounds straddling zero."""
    inst = opposite_sign_instance(n_pairs=4, magnitude=0.07, seed=11)
    data = inst.dataset
    # Certified: both assignments share the first three moment gaps yet
    # their estimates flip sign.
    assert inst.moment_gaps_low == inst.moment_gaps_high
    assert set(inst.moment_gaps_low) == {(0, 1), (0, 2), (0, 3)}
    assert inst.estimate_low < 0.0 < inst.estimate_high

    dist = mahalanobis_distances(data)
    spec = spec_from_baseline(
        data,
        inst.assignment_low,
        dist,
        orders=(1, 2, 3),
        tolerance=0.0,
        estimand_kind="satt",
    )
    result = matching_bounds(data, spec, FormulationKind.F1, distances=dist)
    assert result.feasible
    assert result.straddles_zero
    assert result.lower.estimate.estimate == pytest.approx(-0.07, abs=1e-9)
    assert result.upper.estimate.estimate == pytest.approx(0.07, abs=1e-9)
    print(
        "[PASS] criterion 5 (opposite-sign straddle): bounds "
        f"[{result.lower.estimate.estimate:.6f}, "
        f"{result.upper.estimate.estimate:.6f}] straddle zero under "
        "identical first-three-moment balance"
    )


def test_criterion_6_decomposition_identity():
    """On linear generators the channel decomposition reproduces the
    estimate difference to 1e-12 with a residual of exactly zero."""
    rng = np.random.default_rng(94_000)
    n_checked = 0
    for trial in range(100):
        p = int(rng.integers(1, 4))
        model = SyntheticModel(
            beta_observed=tuple(float(b) for b in rng.normal(size=p)),
            beta_unobserved=tuple(float(b) for b in rng.normal(size=1)),
            beta_noise=float(rng.uniform(0.2, 2.0)),
            intercept=float(rng.normal()),
            treatment_effect=float(rng.normal()),
            noise_std=float(rng.uniform(0.1, 1.5)),
        )
        n_t = int(rng.integers(2, 6))
        n_c = int(rng.integers(4, 9))
        data, ledger = generate(model, n_t, n_c, seed=int(rng.integers(1 << 30)))
        a = pairs_to_assignment(
            data, [(i, int(rng.integers(0, n_c))) for i in range(n_t)]
        )
        b = pairs_to_assignment(
            data, [(i, int(rng.integers(0, n_c))) for i in range(n_t)]
        )
        dec = decompose_difference(ledger, data, a, b)
        measured = (
            estimate_satt(data, a).estimate - estimate_satt(data, b).estimate
        )
        assert dec.residual == 0.0
        assert dec.total == pytest.approx(measured, abs=1e-12)
        n_checked += 1
    print(
        "[PASS] criterion 6 (decomposition identity): "
        f"{n_checked} linear draws, total within 1e-12 of the measured "
        "difference, residual exactly 0"
    )


def test_criterion_7_noise_term_bound():
    """The mean absolute noise term stays below its analytic bound
    within three Monte-Carlo standard errors on every seed."""
    rng = np.random.default_rng(95_000)
    for seed in range(10):
        model = SyntheticModel(
            beta_observed=(1.0,),
            beta_noise=float(rng.uniform(0.3, 2.0)),
            noise_std=float(rng.uniform(0.2, 1.5)),
        )
        n_a = int(rng.integers(2, 13))
        n_b = int(rng.integers(2, 13))
        overlap = int(rng.integers(0, min(n_a, n_b) + 1)) if seed % 2 else 0
        report = noise_bound_check(
            model, n_a, n_b, overlap=overlap, n_reps=1000, seed=seed
        )
        assert report.n_reps == 1000
        assert not report.violated, (
            f"seed {seed}: {report.empirical_mean_abs} > "
            f"{report.analytic_bound} + 3*{report.mc_stderr}"
        )
    print(
        "[PASS] criterion 7 (noise bound): 10 seeds x 1000 repetitions, "
        "empirical mean within 3 MC standard errors of the bound"
    )


def test_criterion_8_relax_and_round_conformance():
    """Relax-and-round equals a hand-rounded relaxation: identical
    rounded vector, identical recomputed estimate, every broken row
    reported with its excess."""
    rng = np.random.default_rng(96_000)
    n_checked = 0
    senses = ("max", "min")
    while n_checked < 20:
        case = random_case(rng, "f1")
        sense = senses[n_checked % 2]
        try:
            model = build_model(
                case.data, case.spec, FormulationKind.F1, sense, case.dist, case.grid
            )
        except CapacityError:
            continue
        relaxation = solve_lp(model)
        rounded = solve(model, SolveOptions(mode="relax-and-round"))
        if relaxation.status == "infeasible":
            assert rounded.status == "infeasible"
            continue
        hand = relaxation.values.copy()
        int_cols = [k for k, v in enumerate(model.variables) if v.is_integer]
        was_fractional = any(
            abs(hand[k] - round(hand[k])) > INTEGRALITY_TOL for k in int_cols
        )
        for k in int_cols:
            hand[k] = np.floor(hand[k] + 0.5)  # round at one half, halves up
        assert np.array_equal(rounded.values, hand)
        assert rounded.objective == model.objective_value(hand)
        want_violations = {
            row.name: row.violation(hand)
            for row in model.constraints
            if row.violation(hand) > FEASIBILITY_TOL
        }
        got_violations = {
            v.name: v.amount for v in rounded.constraint_violations
        }
        assert got_violations == want_violations
        clean = not want_violations and not was_fractional
        assert rounded.status == ("optimal" if clean else "feasible-with-gap")
        n_checked += 1
    print(
        "[PASS] criterion 8 (relax-and-round conformance): "
        f"{n_checked} fixtures match the hand-rounded relaxation exactly, "
        "all violated rows reported"
    )


def _write_fixture_csv(path, data):
    header = ["id", "y", "t"] + list(data.covariate_names)
    ids = list(data.treated_ids) + list(data.control_ids)
    ys = np.concatenate([data.y_treated, data.y_control])
    ts = [1] * data.n_treated + [0] * data.n_control
    xs = np.vstack([data.x_treated, data.x_control])
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for r in range(len(ids)):
            writer.writerow(
                [ids[r], repr(float(ys[r])), ts[r]]
                + [repr(float(v)) for v in xs[r]]
            )


def test_criterion_9_cli_determinism(tmp_path):
    """Every CLI command writes byte-identical artifacts on a rerun
    with the same configuration and seed."""
    rng = np.random.default_rng(97_000)
    data = make_dataset(rng, 3, 5)
    fixture = str(tmp_path / "fixture.csv")
    _write_fixture_csv(fixture, data)
    base = ["--input", fixture, "--id-col", "id"]
    commands = {
        "bounds": ["bounds"] + base + ["--kc", "2", "--eps", "0.4"],
        "sweep": ["sweep"]
        + base
        + ["--eps", "0,0.3,0.7", "--formats", "csv,svg"],
        "profile": ["profile"] + base + ["--moments", "2"],
        "compare": ["compare"] + base + ["--kc", "2", "--eps", "0.4"],
        "simulate": [
            "simulate",
            "--n-treated",
            "4",
            "--n-control",
            "6",
            "--seed",
            "12",
            "--beta-observed",
            "1.0,0.5",
        ],
    }
    artifacts = {
        "bounds": ("bounds.json",),
        "sweep": ("sweep.csv", "sweep.svg"),
        "profile": ("profile.json",),
        "compare": ("diff.csv",),
        "simulate": ("synthetic.csv",),
    }
    n_files = 0
    for name, argv in commands.items():
        out_a = str(tmp_path / f"{name}_a")
        out_b = str(tmp_path / f"{name}_b")
        assert cli_main(argv + ["--out", out_a]) == 0, name
        assert cli_main(argv + ["--out", out_b]) == 0, name
        for filename in artifacts[name]:
            with open(os.path.join(out_a, filename), "rb") as fa:
                bytes_a = fa.read()
            with open(os.path.join(out_b, filename), "rb") as fb:
                bytes_b = fb.read()
            assert bytes_a == bytes_b, f"{name}/{filename} differs across reruns"
            assert bytes_a, f"{name}/{filename} is empty"
            n_files += 1
    print(
        "[PASS] criterion 9 (CLI determinism): "
        f"{len(commands)} commands rerun, {n_files} artifacts byte-identical"
    )
