"""Synthetic generator, effect decomposition and the noise-term bound."""

import numpy as np
import pytest

from matchbounds import (
    MatchAssignment,
    SyntheticModel,
    ValidationError,
    decompose_difference,
    estimate_satt,
    generate,
    moment_gap,
    noise_bound_check,
    opposite_sign_instance,
)
from matchbounds.errors import EstimandUndefinedError
from conftest import pairs_to_assignment


def test_model_validation():
    with pytest.raises(ValidationError):
        SyntheticModel(beta_observed=())
    with pytest.raises(ValidationError):
        SyntheticModel(beta_observed=(1.0,), noise_std=-0.5)
    m = SyntheticModel(beta_observed=(1.0, 2.0), beta_unobserved=(0.5,))
    assert m.n_observed == 2
    assert m.n_unobserved == 1
    assert m.is_linear
    assert not SyntheticModel(beta_observed=(1.0,), nonlinearity=0.3).is_linear


def test_generate_shapes_and_reproducibility():
    model = SyntheticModel(beta_observed=(1.0, -0.5), treatment_effect=0.7)
    data, ledger = generate(model, 5, 9, seed=4)
    assert data.n_treated == 5 and data.n_control == 9
    assert data.n_covariates == 2
    assert ledger.u_treated.shape == (5, 1)
    assert ledger.u_control.shape == (9, 1)
    assert ledger.eps_treated.shape == (5,)
    assert ledger.matches(data)
    again, ledger2 = generate(model, 5, 9, seed=4)
    assert np.array_equal(again.x_treated, data.x_treated)
    assert np.array_equal(again.y_control, data.y_control)
    assert np.array_equal(ledger2.eps_control, ledger.eps_control)
    other, _ = generate(model, 5, 9, seed=5)
    assert not np.array_equal(other.y_treated, data.y_treated)
    with pytest.raises(ValidationError):
        generate(model, 0, 4, seed=1)


def test_generate_outcome_equation_holds():
    model = SyntheticModel(
        beta_observed=(2.0, -1.0),
        beta_unobserved=(0.5,),
        beta_noise=1.5,
        intercept=0.3,
        treatment_effect=0.7,
        nonlinearity=0.2,
        noise_std=0.8,
    )
    data, ledger = generate(model, 4, 6, seed=11)
    beta1 = np.array(model.beta_observed)
    for arm, x, u, eps, y, effect in (
        ("t", data.x_treated, ledger.u_treated, ledger.eps_treated, data.y_treated, 0.7),
        ("c", data.x_control, ledger.u_control, ledger.eps_control, data.y_control, 0.0),
    ):
        want = (
            0.3
            + x @ beta1
            + (u @ np.array(model.beta_unobserved))
            + 1.5 * eps
            + 0.2 * np.sum(x**2, axis=1)
            + effect
        )
        assert np.allclose(y, want, atol=1e-12), arm


def test_linear_decomposition_is_exact():
    model = SyntheticModel(
        beta_observed=(1.2, -0.4), beta_unobserved=(0.9,), beta_noise=0.7
    )
    rng = np.random.default_rng(21)
    for trial in range(25):
        data, ledger = generate(model, 4, 7, seed=100 + trial)
        ja = rng.integers(0, 7, size=4)
        jb = rng.integers(0, 7, size=4)
        a = pairs_to_assignment(data, [(i, int(ja[i])) for i in range(4)])
        b = pairs_to_assignment(data, [(i, int(jb[i])) for i in range(4)])
        dec = decompose_difference(ledger, data, a, b)
        measured = (
            estimate_satt(data, a).estimate - estimate_satt(data, b).estimate
        )
        assert dec.residual == 0.0
        assert dec.total == pytest.approx(measured, abs=1e-12)
        assert dec.term_observed + dec.term_unobserved + dec.term_noise == (
            pytest.approx(dec.total, abs=1e-12)
        )
        assert dec.estimate_a - dec.estimate_b == pytest.approx(
            measured, abs=1e-12
        )


def test_nonlinear_decomposition_closes_with_residual():
    model = SyntheticModel(beta_observed=(1.0,), nonlinearity=0.6)
    data, ledger = generate(model, 3, 6, seed=33)
    a = pairs_to_assignment(data, [(0, 0), (1, 1), (2, 2)])
    b = pairs_to_assignment(data, [(0, 3), (1, 4), (2, 5)])
    dec = decompose_difference(ledger, data, a, b)
    measured = estimate_satt(data, a).estimate - estimate_satt(data, b).estimate
    assert dec.total == pytest.approx(measured, abs=1e-12)
    parts = dec.term_observed + dec.term_unobserved + dec.term_noise
    assert parts + dec.residual == pytest.approx(dec.total, abs=1e-12)
    assert dec.residual != 0.0


def test_decomposition_validation():
    model = SyntheticModel(beta_observed=(1.0,))
    data, ledger = generate(model, 3, 5, seed=44)
    other, _ = generate(model, 3, 5, seed=45)
    full = pairs_to_assignment(data, [(0, 0), (1, 1), (2, 2)])
    with pytest.raises(ValidationError):
        decompose_difference(ledger, other, full, full)
    partial = MatchAssignment(3, 5, [(0, 0), (1, 1)])
    with pytest.raises(EstimandUndefinedError):
        decompose_difference(ledger, data, partial, full)


def test_noise_bound_holds_and_reports():
    model = SyntheticModel(beta_observed=(1.0,), beta_noise=1.4, noise_std=0.9)
    report = noise_bound_check(model, n_a=6, n_b=4, n_reps=4000, seed=5)
    assert report.analytic_bound == pytest.approx(
        1.4 * 0.9 * np.sqrt(1.0 / 6.0 + 1.0 / 4.0)
    )
    assert not report.violated
    assert report.empirical_mean_abs < report.analytic_bound
    assert report.mc_stderr > 0
    assert (report.n_a, report.n_b, report.overlap) == (6, 4, 0)
    # Shared controls only shrink the difference, never break the bound.
    overlapping = noise_bound_check(model, 6, 4, overlap=3, n_reps=4000, seed=5)
    assert not overlapping.violated
    assert overlapping.empirical_mean_abs <= report.empirical_mean_abs + 1e-9


def test_noise_bound_validation():
    model = SyntheticModel(beta_observed=(1.0,))
    with pytest.raises(ValidationError):
        noise_bound_check(model, 0, 3)
    with pytest.raises(ValidationError):
        noise_bound_check(model, 3, 3, overlap=4)
    with pytest.raises(ValidationError):
        noise_bound_check(model, 3, 3, n_reps=1)


def test_opposite_sign_instance_certification():
    inst = opposite_sign_instance(n_pairs=4, magnitude=1.5, seed=9)
    data = inst.dataset
    assert data.n_treated == 4 and data.n_control == 8
    assert inst.estimate_low == -1.5 and inst.estimate_high == 1.5
    assert estimate_satt(data, inst.assignment_low).estimate == pytest.approx(
        -1.5
    )
    assert estimate_satt(data, inst.assignment_high).estimate == pytest.approx(
        1.5
    )
    # Both certified assignments measure identical covariate balance, so
    # any balance-anchored constraint set admits both of them.
    assert inst.moment_gaps_low == inst.moment_gaps_high
    for (p, k), gap in inst.moment_gaps_low.items():
        assert moment_gap(data, inst.assignment_low, p, k, "satt") == gap
    assert inst.ledger.matches(data)
    with pytest.raises(ValidationError):
        opposite_sign_instance(n_pairs=1)
    with pytest.raises(ValidationError):
        opposite_sign_instance(magnitude=0.0)
