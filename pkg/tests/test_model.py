"""Model construction: variables, rows, objectives and the text dump."""

import numpy as np
import pytest

from matchbounds import (
    CapacityError,
    ConfigurationError,
    FormulationKind,
    QualitySpec,
    ValidationError,
    build_model,
    lp_dump,
    mahalanobis_distances,
    quantile_grid,
)
from conftest import make_dataset
from oracles import satt_value, ssatt_value


def _counts_by_label(model):
    counts = {}
    for row in model.constraints:
        counts[row.label] = counts.get(row.label, 0) + 1
    return counts


def test_formulation_parsing():
    assert FormulationKind.from_string("F1") is FormulationKind.F1
    assert FormulationKind.from_string(" f5 ") is FormulationKind.F5
    # The fractional program is solved through its linearization.
    assert FormulationKind.from_string("f2") is FormulationKind.F3
    with pytest.raises(ValidationError):
        FormulationKind.from_string("f9")
    assert FormulationKind.F1.estimand_kind == "satt"
    assert FormulationKind.F3.estimand_kind == "satt"
    assert FormulationKind.F4.estimand_kind == "ssatt"
    assert FormulationKind.F5.estimand_kind == "ssatt"


def test_quality_spec_validation():
    with pytest.raises(ValidationError):
        QualitySpec(max_control_reuse=0)
    with pytest.raises(ValidationError):
        QualitySpec(match_count=0)
    with pytest.raises(ValidationError):
        QualitySpec(distance_budget=-1.0)
    with pytest.raises(ValidationError):
        QualitySpec(moment_targets={(0, 1): -0.5})
    with pytest.raises(ValidationError):
        QualitySpec(caliper=float("inf"))
    spec = QualitySpec(balance_cap=0.3, moment_targets={(0, 1): 0.1, (1, 2): 0.7})
    merged = spec.effective_moment_targets(2)
    assert merged[(0, 1)] == 0.1  # tighter explicit target wins
    assert merged[(1, 1)] == 0.3  # cap fills the missing first moment
    assert merged[(1, 2)] == 0.7


def test_spec_family_bookkeeping():
    spec = QualitySpec(
        distance_budget=1.0,
        caliper=0.5,
        moment_targets={(0, 1): 0.1},
        quantile_targets={(0, 0): 0.2},
        exact_on=(1,),
    )
    assert spec.constraint_families() == (
        "distance",
        "moment",
        "quantile",
        "caliper",
        "exact",
    )
    assert spec.without_family("moment").constraint_families() == (
        "distance",
        "quantile",
        "caliper",
        "exact",
    )
    with pytest.raises(ValidationError):
        spec.without_family("bogus")


def test_f1_structure_and_objective():
    rng = np.random.default_rng(2)
    data = make_dataset(rng, 3, 4)
    spec = QualitySpec(max_control_reuse=2)
    model = build_model(data, spec, FormulationKind.F1)
    assert model.n_variables == 12
    counts = _counts_by_label(model)
    assert counts == {"capacity": 4, "assignment": 3}
    # Objective at the hand assignment (0,1), (1,0), (2,3) equals the
    # per-treated-average estimate.
    x = np.zeros(12)
    for i, j in ((0, 1), (1, 0), (2, 3)):
        x[model.column("w", i, j)] = 1.0
    want = satt_value(data.y_treated, data.y_control, [[1], [0], [3]])
    assert model.objective_value(x) == pytest.approx(want, abs=1e-12)


def test_f1_validation():
    rng = np.random.default_rng(3)
    data = make_dataset(rng, 4, 2)
    with pytest.raises(CapacityError):
        build_model(data, QualitySpec(max_control_reuse=1), FormulationKind.F1)
    with pytest.raises(ValidationError):
        build_model(
            make_dataset(rng, 2, 3),
            QualitySpec(match_count=3),
            FormulationKind.F1,
        )


def test_f3_structure():
    rng = np.random.default_rng(5)
    data = make_dataset(rng, 2, 3)
    model = build_model(data, QualitySpec(), FormulationKind.F3)
    # 6 w + 2 z_i + 6 v columns.
    assert model.n_variables == 14
    counts = _counts_by_label(model)
    assert counts == {"link": 18, "normalize": 2, "capacity": 3}
    strict = [r for r in model.constraints if r.name == "capacity_c0"][0]
    # Strict reuse caps raw pair uses.
    cols = {c for c, _ in strict.coeffs}
    assert cols == {model.column("w", 0, 0), model.column("w", 1, 0)}

    printed = build_model(
        data, QualitySpec(), FormulationKind.F3, reuse_form="printed"
    )
    row = [r for r in printed.constraints if r.name == "capacity_c0"][0]
    cols = {c for c, _ in row.coeffs}
    assert model.column("v", 0, 0) in cols or printed.column("v", 0, 0) in cols
    with pytest.raises(ValidationError):
        build_model(data, QualitySpec(), FormulationKind.F3, reuse_form="loose")


def test_f4_structure_and_objective():
    rng = np.random.default_rng(7)
    data = make_dataset(rng, 3, 4)
    spec = QualitySpec(match_count=2)
    model = build_model(data, spec, FormulationKind.F4)
    counts = _counts_by_label(model)
    assert counts == {"capacity": 4, "assignment": 3, "total": 1}
    x = np.zeros(model.n_variables)
    pairs = [(0, 2), (2, 1)]
    for i, j in pairs:
        x[model.column("w", i, j)] = 1.0
    want = ssatt_value(data.y_treated, data.y_control, pairs)
    assert model.objective_value(x) == pytest.approx(want, abs=1e-12)
    with pytest.raises(ConfigurationError):
        build_model(data, QualitySpec(), FormulationKind.F4)
    with pytest.raises(CapacityError):
        build_model(data, QualitySpec(match_count=4), FormulationKind.F4)


def test_f5_structure_and_objective_at_integer_point():
    rng = np.random.default_rng(9)
    data = make_dataset(rng, 2, 3)
    model = build_model(data, QualitySpec(), FormulationKind.F5)
    # 6 w + z + 6 u.
    assert model.n_variables == 13
    counts = _counts_by_label(model)
    assert counts == {"link": 18, "normalize": 1, "assignment": 4, "capacity": 3}
    # Integer point with both treated matched: u = w/2, z = 1/2.
    pairs = [(0, 0), (1, 2)]
    x = np.zeros(13)
    x[model.column("z")] = 0.5
    for i, j in pairs:
        x[model.column("w", i, j)] = 1.0
        x[model.column("u", i, j)] = 0.5
    for row in model.constraints:
        assert row.violation(x) <= 1e-12, row.name
    want = ssatt_value(data.y_treated, data.y_control, pairs)
    assert model.objective_value(x) == pytest.approx(want, abs=1e-12)


def test_attached_constraint_rows():
    rng = np.random.default_rng(11)
    data = make_dataset(rng, 3, 4)
    dist = mahalanobis_distances(data)
    grid = quantile_grid(data, (0.5,))
    spec = QualitySpec(
        max_control_reuse=1,
        distance_budget=4.0,
        caliper=float(np.quantile(dist.entries, 0.5)),
        moment_targets={(0, 1): 0.5, (1, 2): 0.8},
        quantile_targets={(0, 0): 0.4},
    )
    model = build_model(data, spec, FormulationKind.F1, "max", dist, grid)
    counts = _counts_by_label(model)
    assert counts["distance"] == 1
    assert counts["moment"] == 4  # two-sided per target
    assert counts["quantile"] == 2
    n_blocked = int(np.sum(dist.entries > spec.caliper))
    assert counts["caliper"] == n_blocked
    # Each caliper row pins one pair variable to zero.
    for row in model.constraints:
        if row.label == "caliper":
            assert row.sense == "<=" and row.rhs == 0.0
            assert len(row.coeffs) == 1


def test_exact_rows_only_for_mismatched_pairs():
    rng = np.random.default_rng(13)
    data = make_dataset(rng, 3, 4, discrete_last=True)
    spec = QualitySpec(exact_on=(1,))
    model = build_model(data, spec, FormulationKind.F1)
    mismatched = sum(
        1
        for i in range(3)
        for j in range(4)
        if abs(data.x_treated[i, 1] - data.x_control[j, 1]) > 1e-9
    )
    counts = _counts_by_label(model)
    assert counts.get("exact", 0) == mismatched


def test_balance_cap_adds_first_moment_rows():
    rng = np.random.default_rng(15)
    data = make_dataset(rng, 2, 3)
    spec = QualitySpec(balance_cap=0.6, match_count=2)
    model = build_model(data, spec, FormulationKind.F4, "max")
    counts = _counts_by_label(model)
    assert counts["moment"] == 4  # two covariates, two sides each


def test_lp_dump_is_deterministic_and_complete():
    rng = np.random.default_rng(17)
    data = make_dataset(rng, 2, 3)
    dist = mahalanobis_distances(data)
    spec = QualitySpec(distance_budget=3.0, moment_targets={(0, 1): 0.5})
    model = build_model(data, spec, FormulationKind.F1, "min", dist)
    text = lp_dump(model)
    assert text == lp_dump(model)
    assert "minimize" in text
    assert "subject to" in text
    assert "bounds" in text
    assert "binaries" in text or "binary" in text
    assert text.rstrip().endswith("end")
    assert "w_0_0" in text
    assert "assign_t0" in text
    # Every row name appears exactly once.
    for row in model.constraints:
        assert text.count(f"{row.name}:") == 1


def test_build_model_rejects_bad_sense():
    rng = np.random.default_rng(19)
    data = make_dataset(rng, 2, 3)
    with pytest.raises(ValidationError):
        build_model(data, QualitySpec(), FormulationKind.F1, "upward")
