"""Command line interface.

Subcommands:
  bounds    solve both senses once and write bounds.json
  sweep     bounds across an ascending tolerance grid (sweep.csv, sweep.svg)
  profile   measure a greedy baseline's match quality (profile.json)
  compare   diff the two extreme assignments of a bounds run (diff.csv)
  simulate  generate a synthetic dataset with a known outcome law

Exit codes: 0 on success, 2 when the constraint set is infeasible
(bounds, compare, or every sweep point), 1 on any other error.
Artifacts are deterministic: rerunning a command with the same inputs
writes byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .balance import (
    DistanceMatrix,
    QuantileGrid,
    euclidean_distances,
    mahalanobis_distances,
    profile_assignment,
    quantile_grid,
    score_distances,
)
from .data import (
    ColumnSchema,
    Dataset,
    MatchAssignment,
    estimate_satt,
    estimate_ssatt,
    load_dataset,
)
from .engine import (
    BoundsResult,
    SweepResult,
    budget_form_for,
    compare_assignments,
    epsilon_sweep,
    greedy_nn_match,
    matching_bounds,
    spec_from_baseline,
)
from .errors import ConfigurationError, MatchboundsError, ParseError
from .model import FormulationKind, QualitySpec
from .solver import SolveOptions
from .synth import SyntheticModel, generate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

_METRICS = ("mahalanobis", "euclidean", "score")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the generic error code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _split_names(text: str | None) -> list[str]:
    if not text:
        return []
    return [part.strip() for part in text.split(",") if part.strip()]


def _parse_float_list(text: str, flag: str) -> list[float]:
    values = []
    for part in _split_names(text):
        try:
            values.append(float(part))
        except ValueError:
            raise ConfigurationError(
                f"{flag} expects comma-separated numbers, got {part!r}"
            ) from None
    return values


def _read_header(path: str) -> list[str]:
    try:
        with open(path, newline="") as handle:
            for row in csv.reader(handle):
                if row:
                    return [cell.strip() for cell in row]
    except OSError as exc:
        raise ParseError(f"could not read {path!r}: {exc}") from None
    raise ParseError(f"{path!r} has no header row")


def _resolve_schema(args) -> ColumnSchema:
    names = _split_names(args.covariates)
    if not names:
        reserved = {args.outcome_col, args.treat_col}
        if args.id_col:
            reserved.add(args.id_col)
        if args.score_col:
            reserved.add(args.score_col)
        names = [c for c in _read_header(args.input) if c not in reserved]
    return ColumnSchema(
        outcome=args.outcome_col,
        treatment=args.treat_col,
        covariates=tuple(names),
        id=args.id_col,
        score=args.score_col,
    )


def _load(args) -> Dataset:
    return load_dataset(args.input, _resolve_schema(args))


def _distances(data: Dataset, args) -> DistanceMatrix:
    if args.metric == "score":
        return score_distances(data)
    if data.n_covariates == 0:
        raise ConfigurationError(
            f"metric {args.metric!r} needs at least one covariate column"
        )
    if args.metric == "euclidean":
        return euclidean_distances(data)
    return mahalanobis_distances(data)


def _grid(data: Dataset, args) -> QuantileGrid | None:
    props = _parse_float_list(args.quantiles, "--quantiles")
    if not props:
        return None
    return quantile_grid(data, tuple(sorted(set(props))))


def _orders(args) -> tuple[int, ...]:
    if args.moments < 0:
        raise ConfigurationError("--moments must be >= 0")
    return tuple(range(1, args.moments + 1))


def _exact_indices(data: Dataset, args) -> tuple[int, ...]:
    indices = []
    for name in _split_names(args.exact_on):
        if name not in data.covariate_names:
            raise ConfigurationError(
                f"--exact-on column {name!r} is not a covariate "
                f"(have {', '.join(data.covariate_names)})"
            )
        indices.append(data.covariate_names.index(name))
    return tuple(sorted(set(indices)))


def _baseline(
    data: Dataset, distances: DistanceMatrix, kind: FormulationKind, args
) -> MatchAssignment:
    """Greedy anchor match; for shared-pair runs with --matches, the
    requested number of lowest-distance greedy pairs."""
    replace = data.n_control < data.n_treated
    base = greedy_nn_match(data, distances, replace=replace)
    matches = args.matches
    if kind is FormulationKind.F4 and matches is None:
        raise ConfigurationError(
            "--matches is required for formulation f4 (fixed pair count)"
        )
    if (
        kind.estimand_kind == "ssatt"
        and matches is not None
        and matches < base.n_pairs
    ):
        ranked = sorted(
            base.pairs, key=lambda ij: (distances.entries[ij[0], ij[1]],) + ij
        )
        base = MatchAssignment(
            data.n_treated, data.n_control, ranked[:matches]
        )
    return base


def _estimate(data: Dataset, assignment: MatchAssignment, kind: FormulationKind):
    if kind.estimand_kind == "satt":
        return estimate_satt(data, assignment)
    return estimate_ssatt(data, assignment)


def _solve_options(args) -> SolveOptions:
    return SolveOptions(
        mode=args.mode, time_limit=args.time_limit, seed=args.seed
    )


def _parse_eps_single(args) -> float:
    values = _parse_float_list(args.eps, "--eps")
    if len(values) != 1:
        raise ConfigurationError("--eps expects exactly one value here")
    if values[0] < 0:
        raise ConfigurationError("--eps must be >= 0")
    return values[0]


def _parse_eps_grid(args) -> tuple[float, ...]:
    values = _parse_float_list(args.eps, "--eps")
    if not values:
        raise ConfigurationError("--eps expects at least one value")
    return tuple(values)


def _formats(args, allowed: tuple[str, ...]) -> tuple[str, ...]:
    requested = tuple(_split_names(args.formats)) or allowed
    for fmt in requested:
        if fmt not in allowed:
            raise ConfigurationError(
                f"--formats {fmt!r} is not supported here "
                f"(choose from {', '.join(allowed)})"
            )
    return requested


def _out_path(args, filename: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, filename)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(text)


def _write_json(path: str, payload) -> None:
    _write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt(value: float) -> str:
    return format(value, ".6g")


def _spec_payload(
    spec: QualitySpec, data: Dataset, grid: QuantileGrid | None
) -> dict:
    moments = [
        {
            "bound": bound,
            "covariate": data.covariate_names[p],
            "order": k,
        }
        for (p, k), bound in sorted(spec.moment_targets.items())
    ]
    quantiles = [
        {
            "bound": bound,
            "covariate": data.covariate_names[p],
            "proportion": (grid.proportions[qi] if grid is not None else None),
        }
        for (p, qi), bound in sorted(spec.quantile_targets.items())
    ]
    return {
        "caliper": spec.caliper,
        "distance_budget": spec.distance_budget,
        "exact_on": [data.covariate_names[p] for p in spec.exact_on],
        "match_count": spec.match_count,
        "max_control_reuse": spec.max_control_reuse,
        "moment_targets": moments,
        "quantile_targets": quantiles,
        "tolerance_multiplier": spec.tolerance_multiplier,
    }


def _side_payload(side, data: Dataset) -> dict:
    pairs = [
        [data.treated_ids[i], data.control_ids[j]]
        for i, j in side.assignment.pairs
    ]
    quality = [
        {
            "bound": q.bound,
            "family": q.family,
            "key": q.key,
            "measured": q.measured,
            "ok": q.ok,
            "slack": q.slack,
        }
        for q in side.quality_check
    ]
    sol = side.solution
    return {
        "ci95": list(side.ci95) if side.ci95 is not None else None,
        "ci_label": side.ci_label,
        "estimate": side.estimate.estimate,
        "n_matches": side.estimate.n_matches,
        "pairs": pairs,
        "quality": quality,
        "solver": {
            "best_bound": sol.best_bound,
            "lp_iterations": sol.lp_iterations,
            "n_violations": len(sol.constraint_violations),
            "nodes_explored": sol.nodes_explored,
            "objective": sol.objective,
            "status": sol.status,
        },
    }


def _bounds_payload(
    result: BoundsResult,
    data: Dataset,
    grid: QuantileGrid | None,
    baseline_estimate: float,
    baseline_pairs: int,
    epsilon: float,
    options: SolveOptions,
    metric: str,
) -> dict:
    return {
        "baseline": {
            "estimate": baseline_estimate,
            "method": "greedy-nn",
            "n_pairs": baseline_pairs,
        },
        "diagnosis": result.diagnosis,
        "epsilon": epsilon,
        "estimand": result.estimand_kind,
        "feasible": result.feasible,
        "formulation": result.formulation.value,
        "lower": (
            _side_payload(result.lower, data) if result.lower is not None else None
        ),
        "metric": metric,
        "n_control": data.n_control,
        "n_treated": data.n_treated,
        "solver_options": {
            "mode": options.mode,
            "seed": options.seed,
            "time_limit": options.time_limit,
        },
        "spec": _spec_payload(result.spec_used, data, grid),
        "straddles_zero": result.straddles_zero,
        "upper": (
            _side_payload(result.upper, data) if result.upper is not None else None
        ),
        "width": result.width,
    }


def _run_bounds(args) -> tuple[BoundsResult, Dataset, QuantileGrid | None, dict]:
    """Shared pipeline for the bounds and compare subcommands."""
    data = _load(args)
    distances = _distances(data, args)
    grid = _grid(data, args)
    kind = FormulationKind.from_string(args.formulation)
    epsilon = _parse_eps_single(args)
    baseline = _baseline(data, distances, kind, args)
    baseline_report = _estimate(data, baseline, kind)
    spec = spec_from_baseline(
        data,
        baseline,
        distances,
        grid,
        _orders(args),
        tolerance=epsilon,
        estimand_kind=kind.estimand_kind,
        max_control_reuse=args.kc,
        match_count=args.matches,
        caliper=args.caliper,
        exact_on=_exact_indices(data, args),
        distance_form=budget_form_for(kind),
    )
    options = _solve_options(args)
    result = matching_bounds(data, spec, kind, options, distances, grid)
    payload = _bounds_payload(
        result,
        data,
        grid,
        baseline_report.estimate,
        baseline.n_pairs,
        epsilon,
        options,
        args.metric,
    )
    return result, data, grid, payload


def cmd_bounds(args) -> int:
    result, data, _, payload = _run_bounds(args)
    formats = _formats(args, ("json",))
    if "json" in formats:
        path = _out_path(args, "bounds.json")
        _write_json(path, payload)
        print(f"wrote {path}")
    if not result.feasible:
        print(f"infeasible: {result.diagnosis}")
        return EXIT_INFEASIBLE
    lo = result.lower.estimate.estimate
    hi = result.upper.estimate.estimate
    print(
        f"{result.formulation.value} ({result.estimand_kind}) on "
        f"{data.n_treated} treated / {data.n_control} controls"
    )
    print(f"baseline estimate {_fmt(payload['baseline']['estimate'])}")
    print(
        f"bounds [{_fmt(lo)}, {_fmt(hi)}] width {_fmt(result.width)} "
        f"at epsilon {_fmt(payload['epsilon'])}"
    )
    print(f"straddles zero: {'yes' if result.straddles_zero else 'no'}")
    return EXIT_OK


def _sweep_rows(sweep: SweepResult) -> list[list]:
    rows = []
    for pt in sweep.points:
        res = pt.result
        if res.feasible:
            lo = res.lower.estimate.estimate
            hi = res.upper.estimate.estimate
            rows.append(
                [
                    _cell(pt.epsilon),
                    "true",
                    _cell(lo),
                    _cell(hi),
                    _cell(hi - lo),
                    res.lower.solution.status,
                    res.upper.solution.status,
                    "",
                ]
            )
        else:
            rows.append(
                [_cell(pt.epsilon), "false", "", "", "", "", "", res.diagnosis or ""]
            )
    return rows


def emit_sweep_svg(sweep: SweepResult) -> str:
    """Render the sweep as a self-contained SVG string.

    Lower and upper bound curves with the band between them, the
    baseline estimate as a dashed reference, a zero line, and an x
    marker for infeasible grid points. Output is a pure function of the
    sweep, so reruns are byte-identical.
    """
    width, height = 640, 400
    ml, mr, mt, mb = 64, 18, 36, 48
    x0, x1 = ml, width - mr
    y0, y1 = mt, height - mb
    eps = [pt.epsilon for pt in sweep.points]
    feasible = [pt for pt in sweep.points if pt.result.feasible]
    base = sweep.baseline_estimate.estimate
    xmin, xmax = min(eps), max(eps)
    if xmax <= xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    yvals = [base, 0.0]
    for pt in feasible:
        yvals.append(pt.result.lower.estimate.estimate)
        yvals.append(pt.result.upper.estimate.estimate)
    ymin, ymax = min(yvals), max(yvals)
    if ymax <= ymin:
        ymin, ymax = ymin - 1.0, ymax + 1.0
    pad = 0.08 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad

    def fx(e: float) -> float:
        return x0 + (e - xmin) / (xmax - xmin) * (x1 - x0)

    def fy(v: float) -> float:
        return y1 - (v - ymin) / (ymax - ymin) * (y1 - y0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{_fmt((x0 + x1) / 2)}" y="20" text-anchor="middle" '
        'font-family="sans-serif" font-size="14" fill="#222">'
        "estimate bounds across tolerance relaxations</text>",
    ]
    style = 'font-family="sans-serif" font-size="11" fill="#333"'
    # Axes.
    parts.append(
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y1)}" x2="{_fmt(x1)}" y2="{_fmt(y1)}" '
        'stroke="#333" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y1)}" '
        'stroke="#333" stroke-width="1"/>'
    )
    step = 2 if len(eps) > 12 else 1
    for idx, e in enumerate(eps):
        x = fx(e)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{_fmt(y1)}" x2="{_fmt(x)}" '
            f'y2="{_fmt(y1 + 4)}" stroke="#333" stroke-width="1"/>'
        )
        if idx % step == 0:
            parts.append(
                f'<text x="{_fmt(x)}" y="{_fmt(y1 + 16)}" text-anchor="middle" '
                f"{style}>{_fmt(e)}</text>"
            )
    for k in range(5):
        v = ymin + k * (ymax - ymin) / 4
        y = fy(v)
        parts.append(
            f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(y)}" x2="{_fmt(x0)}" '
            f'y2="{_fmt(y)}" stroke="#333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x0 - 7)}" y="{_fmt(y + 3.5)}" text-anchor="end" '
            f"{style}>{_fmt(v)}</text>"
        )
    parts.append(
        f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(height - 10)}" '
        f'text-anchor="middle" {style}>tolerance epsilon</text>'
    )
    parts.append(
        f'<text x="16" y="{_fmt((y0 + y1) / 2)}" text-anchor="middle" {style} '
        f'transform="rotate(-90 16 {_fmt((y0 + y1) / 2)})">estimate</text>'
    )
    # Zero and baseline references.
    if ymin < 0.0 < ymax:
        zy = fy(0.0)
        parts.append(
            f'<line x1="{_fmt(x0)}" y1="{_fmt(zy)}" x2="{_fmt(x1)}" '
            f'y2="{_fmt(zy)}" stroke="#999" stroke-width="1" '
            'stroke-dasharray="2,3"/>'
        )
    by = fy(base)
    parts.append(
        f'<line x1="{_fmt(x0)}" y1="{_fmt(by)}" x2="{_fmt(x1)}" y2="{_fmt(by)}" '
        'stroke="#555" stroke-width="1" stroke-dasharray="6,4"/>'
    )
    parts.append(
        f'<text x="{_fmt(x1)}" y="{_fmt(by - 4)}" text-anchor="end" {style}>'
        f"baseline {_fmt(base)}</text>"
    )
    # Contiguous feasible runs: band, curves, markers.
    runs: list[list] = []
    current: list = []
    for pt in sweep.points:
        if pt.result.feasible:
            current.append(pt)
        elif current:
            runs.append(current)
            current = []
    if current:
        runs.append(current)
    for run in runs:
        los = [(fx(p.epsilon), fy(p.result.lower.estimate.estimate)) for p in run]
        his = [(fx(p.epsilon), fy(p.result.upper.estimate.estimate)) for p in run]
        if len(run) > 1:
            ring = his + los[::-1]
            pts_attr = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in ring)
            parts.append(
                f'<polygon points="{pts_attr}" fill="#aac8e8" '
                'fill-opacity="0.45" stroke="none"/>'
            )
            for coords, color in ((los, "#1f77b4"), (his, "#d62728")):
                pts_attr = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)
                parts.append(
                    f'<polyline points="{pts_attr}" fill="none" '
                    f'stroke="{color}" stroke-width="1.6"/>'
                )
        for coords, color in ((los, "#1f77b4"), (his, "#d62728")):
            for x, y in coords:
                parts.append(
                    f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2.8" '
                    f'fill="{color}"/>'
                )
    for pt in sweep.points:
        if not pt.result.feasible:
            parts.append(
                f'<text x="{_fmt(fx(pt.epsilon))}" y="{_fmt((y0 + y1) / 2)}" '
                f'text-anchor="middle" font-family="sans-serif" font-size="13" '
                'fill="#b00020">x</text>'
            )
    # Legend.
    lx = x1 - 118
    for row, (color, label) in enumerate(
        (("#d62728", "upper bound"), ("#1f77b4", "lower bound"))
    ):
        y = y0 + 6 + 14 * row
        parts.append(
            f'<rect x="{_fmt(lx)}" y="{_fmt(y - 7)}" width="10" height="10" '
            f'fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_fmt(lx + 15)}" y="{_fmt(y + 2)}" {style}>{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_sweep(args) -> int:
    data = _load(args)
    distances = _distances(data, args)
    grid = _grid(data, args)
    kind = FormulationKind.from_string(args.formulation)
    epsilons = _parse_eps_grid(args)
    baseline = _baseline(data, distances, kind, args)
    sweep = epsilon_sweep(
        data,
        baseline,
        epsilons,
        kind,
        distances,
        grid,
        _orders(args),
        _solve_options(args),
        caliper=args.caliper,
        exact_on=_exact_indices(data, args),
        match_count=args.matches,
    )
    formats = _formats(args, ("csv", "svg"))
    if "csv" in formats:
        path = _out_path(args, "sweep.csv")
        _write_csv(
            path,
            [
                "epsilon",
                "feasible",
                "lower",
                "upper",
                "width",
                "lower_status",
                "upper_status",
                "diagnosis",
            ],
            _sweep_rows(sweep),
        )
        print(f"wrote {path}")
    if "svg" in formats:
        path = _out_path(args, "sweep.svg")
        _write_text(path, emit_sweep_svg(sweep))
        print(f"wrote {path}")
    n_feasible = 0
    for pt in sweep.points:
        if pt.result.feasible:
            n_feasible += 1
            lo = pt.result.lower.estimate.estimate
            hi = pt.result.upper.estimate.estimate
            print(
                f"epsilon {_fmt(pt.epsilon)}: [{_fmt(lo)}, {_fmt(hi)}] "
                f"width {_fmt(hi - lo)}"
            )
        else:
            print(f"epsilon {_fmt(pt.epsilon)}: infeasible ({pt.result.diagnosis})")
    return EXIT_OK if n_feasible else EXIT_INFEASIBLE


def cmd_profile(args) -> int:
    data = _load(args)
    distances = _distances(data, args)
    grid = _grid(data, args)
    kind = FormulationKind.from_string(args.formulation)
    baseline = _baseline(data, distances, kind, args)
    report = _estimate(data, baseline, kind)
    prof = profile_assignment(
        data, baseline, distances, grid, _orders(args), kind.estimand_kind
    )
    payload = {
        "baseline_method": "greedy-nn",
        "estimand": prof.estimand_kind,
        "estimate": report.estimate,
        "max_pair_distance": prof.max_pair_distance,
        "metric": args.metric,
        "moment_gaps": [
            {"covariate": data.covariate_names[p], "gap": gap, "order": k}
            for (p, k), gap in sorted(prof.moment_gaps.items())
        ],
        "n_pairs": prof.n_pairs,
        "quantile_gaps": [
            {
                "covariate": data.covariate_names[p],
                "gap": gap,
                "proportion": (grid.proportions[qi] if grid is not None else None),
            }
            for (p, qi), gap in sorted(prof.quantile_gaps.items())
        ],
        "total_distance": prof.total_distance,
    }
    formats = _formats(args, ("json",))
    if "json" in formats:
        path = _out_path(args, "profile.json")
        _write_json(path, payload)
        print(f"wrote {path}")
    print(
        f"baseline ({prof.estimand_kind}) estimate {_fmt(report.estimate)} "
        f"over {prof.n_pairs} pairs"
    )
    for entry in payload["moment_gaps"]:
        print(
            f"moment gap {entry['covariate']} order {entry['order']}: "
            f"{_fmt(entry['gap'])}"
        )
    return EXIT_OK


def cmd_compare(args) -> int:
    result, data, _, _ = _run_bounds(args)
    if not result.feasible:
        print(f"infeasible: {result.diagnosis}")
        return EXIT_INFEASIBLE
    diff = compare_assignments(
        data, result.lower.assignment, result.upper.assignment
    )
    formats = _formats(args, ("csv",))
    if "csv" in formats:
        path = _out_path(args, "diff.csv")
        _write_csv(
            path,
            [
                "control_id",
                "outcome",
                "lower_count",
                "upper_count",
                "outcome_sum_lower_only",
                "outcome_sum_upper_only",
            ],
            [
                [
                    row.control_id,
                    _cell(row.outcome),
                    row.lower_rows,
                    row.upper_rows,
                    _cell(row.outcome_sum_lower_only),
                    _cell(row.outcome_sum_upper_only),
                ]
                for row in diff.rows
            ],
        )
        print(f"wrote {path}")
    lo = result.lower.estimate.estimate
    hi = result.upper.estimate.estimate
    print(f"bounds [{_fmt(lo)}, {_fmt(hi)}] width {_fmt(hi - lo)}")
    print(
        f"shared pairs {diff.shared_pairs}, lower-only {diff.lower_only_pairs}, "
        f"upper-only {diff.upper_only_pairs}, differing control slots "
        f"{diff.differing_controls}"
    )
    print(
        f"outcome mass moved: lower-only {_fmt(diff.outcome_sum_lower_only)}, "
        f"upper-only {_fmt(diff.outcome_sum_upper_only)}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = SyntheticModel(
        beta_observed=tuple(
            _parse_float_list(args.beta_observed, "--beta-observed")
        ),
        beta_unobserved=tuple(
            _parse_float_list(args.beta_unobserved, "--beta-unobserved")
        ),
        beta_noise=args.beta_noise,
        treatment_effect=args.effect,
        noise_std=args.noise_std,
        nonlinearity=args.nonlinearity,
    )
    data, _ = generate(model, args.n_treated, args.n_control, args.seed)
    formats = _formats(args, ("csv",))
    if "csv" in formats:
        path = _out_path(args, "synthetic.csv")
        header = ["id", "y", "t"] + list(data.covariate_names)
        rows = [
            [u.id, _cell(u.outcome), u.treated]
            + [_cell(v) for v in u.covariates]
            for u in data.units
        ]
        _write_csv(path, header, rows)
        print(f"wrote {path}")
    print(
        f"generated {args.n_treated} treated / {args.n_control} controls "
        f"with constant effect {_fmt(args.effect)} (seed {args.seed})"
    )
    return EXIT_OK


def _add_data_args(parser) -> None:
    parser.add_argument("--input", required=True, help="input CSV file")
    parser.add_argument(
        "--outcome-col", default="y", help="outcome column (default y)"
    )
    parser.add_argument(
        "--treat-col", default="t", help="treatment indicator column (default t)"
    )
    parser.add_argument(
        "--covariates",
        default="",
        help="comma-separated covariate columns; default: every column not "
        "mapped elsewhere, in header order",
    )
    parser.add_argument(
        "--id-col", default=None, help="unit id column (default: row numbers)"
    )
    parser.add_argument(
        "--score-col", default=None, help="precomputed score column"
    )


def _add_model_args(parser) -> None:
    parser.add_argument(
        "--formulation",
        default="f1",
        choices=("f1", "f2", "f3", "f4", "f5"),
        help="which program to solve (f2 solves through its linearization)",
    )
    parser.add_argument(
        "--kc", type=int, default=1, help="max treated units per control"
    )
    parser.add_argument(
        "--matches",
        type=int,
        default=None,
        help="total matched pairs (required for f4)",
    )
    parser.add_argument(
        "--moments",
        type=int,
        default=1,
        help="constrain moment gaps up to this order (0 disables; default 1)",
    )
    parser.add_argument(
        "--quantiles",
        default="",
        help="comma-separated proportions in (0, 1] to constrain quantile gaps",
    )
    parser.add_argument(
        "--caliper", type=float, default=None, help="max per-pair distance"
    )
    parser.add_argument(
        "--exact-on",
        default="",
        help="comma-separated covariates that must match exactly",
    )
    parser.add_argument(
        "--metric",
        default="mahalanobis",
        choices=_METRICS,
        help="pair distance metric (score needs --score-col)",
    )


def _add_solver_args(parser) -> None:
    parser.add_argument(
        "--mode",
        default="exact",
        choices=("exact", "relax-and-round"),
        help="exact search or a rounded relaxation with violation report",
    )
    parser.add_argument(
        "--time-limit", type=float, default=None, help="solver seconds budget"
    )
    parser.add_argument(
        "--seed", type=int, default=0, help="recorded run seed (solves are "
        "deterministic; the seed labels artifacts and feeds simulate)"
    )


def _add_out_args(parser, default_formats: str) -> None:
    parser.add_argument(
        "--out", default=".", help="output directory (created if missing)"
    )
    parser.add_argument(
        "--formats",
        default=default_formats,
        help=f"comma-separated artifact formats (default {default_formats})",
    )
    parser.add_argument(
        "--json-errors",
        action="store_true",
        help="report errors as a JSON object on stderr",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="matchbounds",
        description="Extremal matching estimates over match-quality constraint sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bounds = sub.add_parser(
        "bounds", help="solve both senses once and write bounds.json"
    )
    _add_data_args(p_bounds)
    _add_model_args(p_bounds)
    p_bounds.add_argument(
        "--eps",
        default="0.2",
        help="tolerance multiplier applied to the baseline profile (default 0.2)",
    )
    _add_solver_args(p_bounds)
    _add_out_args(p_bounds, "json")
    p_bounds.set_defaults(func=cmd_bounds)

    p_sweep = sub.add_parser(
        "sweep", help="bounds across an ascending tolerance grid"
    )
    _add_data_args(p_sweep)
    _add_model_args(p_sweep)
    p_sweep.add_argument(
        "--eps",
        default="0,0.2,0.4,0.6,0.9,1.0",
        help="comma-separated ascending tolerance grid",
    )
    _add_solver_args(p_sweep)
    _add_out_args(p_sweep, "csv,svg")
    p_sweep.set_defaults(func=cmd_sweep)

    p_profile = sub.add_parser(
        "profile", help="measure the greedy baseline's match quality"
    )
    _add_data_args(p_profile)
    _add_model_args(p_profile)
    _add_solver_args(p_profile)
    _add_out_args(p_profile, "json")
    p_profile.set_defaults(func=cmd_profile)

    p_compare = sub.add_parser(
        "compare", help="diff the two extreme assignments of a bounds run"
    )
    _add_data_args(p_compare)
    _add_model_args(p_compare)
    p_compare.add_argument(
        "--eps",
        default="0.2",
        help="tolerance multiplier applied to the baseline profile (default 0.2)",
    )
    _add_solver_args(p_compare)
    _add_out_args(p_compare, "csv")
    p_compare.set_defaults(func=cmd_compare)

    p_sim = sub.add_parser(
        "simulate", help="generate a synthetic dataset with a known outcome law"
    )
    p_sim.add_argument("--n-treated", type=int, required=True)
    p_sim.add_argument("--n-control", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument(
        "--beta-observed",
        default="1.0",
        help="comma-separated observed-covariate coefficients",
    )
    p_sim.add_argument(
        "--beta-unobserved",
        default="1.0",
        help="comma-separated unobserved-covariate coefficients",
    )
    p_sim.add_argument("--beta-noise", type=float, default=1.0)
    p_sim.add_argument("--noise-std", type=float, default=1.0)
    p_sim.add_argument(
        "--effect", type=float, default=0.0, help="constant treatment effect"
    )
    p_sim.add_argument(
        "--nonlinearity",
        type=float,
        default=0.0,
        help="coefficient on the squared-covariate outcome term",
    )
    _add_out_args(p_sim, "csv")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MatchboundsError, OSError) as exc:
        if getattr(args, "json_errors", False):
            payload = {"error": type(exc).__name__, "message": str(exc)}
            print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
