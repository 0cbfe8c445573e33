"""Command-line front end: solve, compare against simulation, sweep grids.

Exit codes: 0 success, 1 config error, 2 instability, 3 solver failure,
4 analytic/simulation comparison failure.  Every run writes matching text
and JSON reports; comparisons and sweeps additionally write byte-stable
CSV files (floats rendered with %.10g, fixed row order).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np

from .config import InstanceConfig, load_instance, model1_variant, model2_variant
from .errors import (
    ConfigError,
    InstabilityError,
    ModLindleyError,
    ReducibleChainError,
)
from .model1 import check_stability_model1, mean_workload, solve_model1
from .model2 import (
    check_stability_model2,
    decay_profile,
    moments_model2,
    solve_model2,
)
from .probcore import ModulationChain
from .report import (
    COMPARISON_HEADER,
    Check,
    ComparisonRow,
    RunReport,
    comparison_rows_to_csv,
    render_text,
    write_csv,
    write_report,
)
from .simulate import SIM_TRANSFORM_POINTS, simulate_model1, simulate_model2

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNSTABLE = 2
EXIT_SOLVER = 3
EXIT_COMPARISON = 4

REPORT_POINTS = (0.5, 1.0, 2.0)
SWEEP_U_DEFAULT = tuple(np.round(np.arange(1.0, 5.0 + 1e-9, 0.5), 10))
SWEEP_P_DEFAULT = tuple(np.round(np.arange(0.1, 0.9 + 1e-9, 0.1), 10))
CHAIN_AUTO = ((0.0, 1.0), (1.0, 0.0))
CHAIN_INDEP = ((0.5, 0.5), (0.5, 0.5))

# residual / mass-at-zero gate per model: the series evaluator carries its
# truncation error, the dense solver works at machine precision
RESIDUAL_TOL = {"model1": 1e-6, "model1_special": 1e-6, "model2": 1e-8}
PHI0_TOL = {"model1": 1e-8, "model1_special": 1e-8, "model2": 1e-10}


# ---------------------------------------------------------------------------
# solve pipeline


def _check_stability(cfg: InstanceConfig):
    if cfg.model == "model2":
        stab = check_stability_model2(cfg.spec)
        detail = {
            "verdict": "stable" if stab.stable else "unstable",
            "p": stab.p,
            "load_plus": stab.load_plus,
            "detail": stab.detail,
        }
    else:
        stab = check_stability_model1(cfg.spec)
        detail = {
            "verdict": "stable" if stab.stable else "unstable",
            "p3": stab.p3,
            "probe_frequency": stab.probe_frequency,
            "closed_form": stab.closed_form,
            "detail": stab.detail,
        }
    if not stab.stable:
        raise InstabilityError(stab.detail)
    return detail


def _solve(cfg: InstanceConfig):
    if cfg.model == "model2":
        return solve_model2(cfg.spec, search_bound=cfg.solver.search_bound)
    return solve_model1(cfg.spec)


def _solution_section(cfg: InstanceConfig, sol) -> dict:
    if cfg.model == "model2":
        return {
            "mode": sol.mode,
            "boundary_roots": np.asarray(sol.si_roots),
            "cond": sol.cond,
            "max_imag": sol.max_imag,
            "residual_max": sol.residual_max,
            "mismatch_max": sol.mismatch_max,
        }
    return {
        "mode": sol.mode,
        "delta_roots": np.asarray(sol.delta_roots),
        "t_roots": np.asarray(sol.t_roots),
        "cond": sol.cond,
        "max_imag": sol.max_imag,
        "residual_max": sol.residual_max,
    }


def _solution_outputs(cfg: InstanceConfig, sol) -> dict:
    outputs: dict = {}
    points = np.array(REPORT_POINTS)
    values = np.real(sol.evaluate_grid(points))
    outputs["transform_points"] = points
    outputs["transform_by_state"] = values
    if cfg.model == "model2":
        rows = moments_model2(sol, r_max=cfg.solver.r_max)
        outputs["moment_rows"] = rows
        outputs["mean_by_state"] = rows[1]
        outputs["mean_total"] = float(rows[1].sum())
        try:
            profile = decay_profile(sol, search_bound=cfg.solver.search_bound)
            outputs["decay"] = {
                "rate": profile.rate,
                "zero": profile.zero,
                "dominated": profile.dominated,
                "oscillatory": profile.oscillatory,
                "coefficients": profile.coefficients,
                "tail_prefactors": profile.tail_prefactors,
                "caveats": list(profile.caveats),
            }
        except ModLindleyError as exc:
            outputs["decay"] = {"unavailable": f"{type(exc).__name__}: {exc}"}
    else:
        means = mean_workload(sol)
        outputs["mean_by_state"] = means
        outputs["mean_total"] = float(np.sum(means))
    return outputs


def _solution_checks(cfg: InstanceConfig, sol, tol_override: float | None) -> list[Check]:
    pi = cfg.spec.chain.stationary
    phi0_gap = float(np.max(np.abs(np.real(sol.evaluate(0.0)) - pi)))
    phi0_tol = PHI0_TOL[cfg.model]
    residual_tol = tol_override if tol_override is not None else RESIDUAL_TOL[cfg.model]
    checks = [
        Check(
            name="mass at zero equals stationary law",
            value=phi0_gap,
            tolerance=f"max gap <= {phi0_tol:g}",
            passed=phi0_gap <= phi0_tol,
        ),
        Check(
            name="verification-grid residual",
            value=float(sol.residual_max),
            tolerance=f"max residual <= {residual_tol:g}",
            passed=bool(sol.residual_max <= residual_tol),
        ),
    ]
    return checks


def _build_report(cfg: InstanceConfig, tol_override: float | None = None) -> tuple[RunReport, object]:
    stability = _check_stability(cfg)
    sol = _solve(cfg)
    report = RunReport(
        label=cfg.label,
        model=cfg.model,
        stability=stability,
        solution=_solution_section(cfg, sol),
        outputs=_solution_outputs(cfg, sol),
        checks=_solution_checks(cfg, sol, tol_override),
        warnings=list(sol.warnings),
    )
    return report, sol


def cmd_solve(args) -> int:
    cfg = load_instance(args.config)
    report, _ = _build_report(cfg, tol_override=args.tol)
    os.makedirs(args.out, exist_ok=True)
    write_report(report, args.out, stem="report")
    sys.stdout.write(render_text(report))
    return EXIT_OK if report.all_passed else EXIT_SOLVER


# ---------------------------------------------------------------------------
# compare


def _z_row(quantity: str, state: int, analytic: float, simulated: float, se: float) -> ComparisonRow:
    diff = simulated - analytic
    if se > 0 and math.isfinite(se):
        z = diff / se
    else:
        z = 0.0 if abs(diff) <= 1e-15 else math.inf
    return ComparisonRow(
        quantity=quantity,
        state=state,
        analytic=float(analytic),
        simulated=float(simulated),
        stderr=float(se),
        z_score=float(z),
        passed=bool(abs(z) <= 3.0),
    )


def comparison_rows(cfg: InstanceConfig, sol, est, shift: float = 0.0) -> list[ComparisonRow]:
    """Mean and transform rows, analytic vs. simulated.

    ``shift`` displaces the analytic means; it exists so the negative control
    (a deliberately corrupted solution must fail) can be tested end to end.
    """
    if cfg.model == "model2":
        means = moments_model2(sol, r_max=1)[1]
    else:
        means = mean_workload(sol)
    rows = [
        _z_row("mean", j, means[j] + shift, est.mean_by_state[j], est.mean_se[j])
        for j in range(len(means))
    ]
    values = np.real(sol.evaluate_grid(np.asarray(est.transform_points)))
    for k, s in enumerate(est.transform_points):
        for j in range(values.shape[1]):
            rows.append(
                _z_row(
                    f"transform@{s:g}",
                    j,
                    values[k, j],
                    est.transform_by_state[k, j],
                    est.transform_se[k, j],
                )
            )
    return rows


def cmd_compare(args, _shift: float = 0.0) -> int:
    cfg = load_instance(args.config)
    report, sol = _build_report(cfg, tol_override=args.tol)
    sim_cfg = cfg.sim
    if args.seed is not None:
        sim_cfg = dataclasses.replace(sim_cfg, seed=args.seed)
    if cfg.model == "model2":
        est = simulate_model2(cfg.spec, sim_cfg)
    else:
        est = simulate_model1(cfg.spec, sim_cfg)
    report.comparison = comparison_rows(cfg, sol, est, shift=_shift)
    os.makedirs(args.out, exist_ok=True)
    write_report(report, args.out, stem="report")
    write_csv(
        os.path.join(args.out, "comparison.csv"),
        COMPARISON_HEADER,
        comparison_rows_to_csv(report.comparison),
    )
    sys.stdout.write(render_text(report))
    if not all(row.passed for row in report.comparison):
        return EXIT_COMPARISON
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweeps


def _parse_grid(text: str | None, default: tuple[float, ...], name: str) -> tuple[float, ...]:
    if text is None:
        return default
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"invalid {name} grid: {text!r}") from exc
    if not values:
        raise ConfigError(f"{name} grid is empty")
    return values


def sweep_model1_rows(cfg: InstanceConfig, u_values) -> list[tuple]:
    """Coupled vs. independent modulation at matched marginals.

    The alternating chain visits each state half the time, exactly like the
    symmetric independent chain, so any gap between the two columns is pure
    dependence structure.  Service laws are stretched by u (rates mu_i / u).
    """
    chains = (
        ModulationChain.from_matrix(CHAIN_AUTO),
        ModulationChain.from_matrix(CHAIN_INDEP),
    )
    rows = []
    for u in u_values:
        cells: list = [float(u)]
        for chain in chains:
            try:
                spec = model1_variant(cfg.spec, chain=chain, service_scale=float(u))
                mean = float(np.sum(mean_workload(solve_model1(spec))))
                cells.append(mean)
            except ModLindleyError as exc:
                cells.append(f"error:{type(exc).__name__}")
        rows.append(tuple(cells))
    return rows


def cmd_sweep_model1(args) -> int:
    cfg = load_instance(args.config)
    if cfg.model == "model2":
        raise ConfigError("sweep-model1 needs a model1 config", "model")
    if cfg.spec.n_states != 2:
        raise ConfigError("the modulation sweep is defined for 2-state chains", "chain")
    u_values = _parse_grid(args.u, SWEEP_U_DEFAULT, "u")
    rows = sweep_model1_rows(cfg, u_values)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "sweep_model1.csv")
    write_csv(path, ["u", "mean_auto", "mean_indep"], rows)
    sys.stdout.write(f"wrote {path} ({len(rows)} rows)\n")
    return EXIT_OK


def sweep_model2_rows(cfg: InstanceConfig, p_values, u_values) -> list[tuple]:
    rows = []
    for p in p_values:
        for u in u_values:
            try:
                spec = model2_variant(cfg.spec, p=float(p), service_scale=float(u))
                sol = solve_model2(spec)
                mean = float(np.sum(moments_model2(sol, r_max=1)[1]))
                rows.append((float(p), float(u), mean))
            except ModLindleyError as exc:
                rows.append((float(p), float(u), f"error:{type(exc).__name__}"))
    return rows


def cmd_sweep_model2(args) -> int:
    cfg = load_instance(args.config)
    if cfg.model != "model2":
        raise ConfigError("sweep-model2 needs a model2 config", "model")
    p_values = _parse_grid(args.p, SWEEP_P_DEFAULT, "p")
    u_values = _parse_grid(args.u, SWEEP_U_DEFAULT, "u")
    rows = sweep_model2_rows(cfg, p_values, u_values)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "sweep_model2.csv")
    write_csv(path, ["p", "u", "mean_wait"], rows)
    sys.stdout.write(f"wrote {path} ({len(rows)} rows)\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = load_instance(args.config)
    stability = _check_stability(cfg)
    sim_cfg = cfg.sim
    if args.seed is not None:
        sim_cfg = dataclasses.replace(sim_cfg, seed=args.seed)
    if cfg.model == "model2":
        est = simulate_model2(cfg.spec, sim_cfg)
    else:
        est = simulate_model1(cfg.spec, sim_cfg)
    report = RunReport(
        label=cfg.label,
        model=cfg.model,
        stability=stability,
        solution={"mode": "simulation only"},
        outputs={
            "mean_by_state": est.mean_by_state,
            "mean_se": est.mean_se,
            "transform_points": np.asarray(est.transform_points),
            "transform_by_state": est.transform_by_state,
            "transform_se": est.transform_se,
            "visit_frequencies": est.visit_frequencies,
            "tail_slope": est.tail_slope,
            "tail_slope_ci": np.asarray(est.tail_slope_ci),
            "replications": est.replications,
            "steps_per_replication": est.steps_per_replication,
        },
    )
    os.makedirs(args.out, exist_ok=True)
    write_report(report, args.out, stem="simulation")
    sys.stdout.write(render_text(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


class _Parser(argparse.ArgumentParser):
    """Usage mistakes are config errors (exit 1), not exit 2."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="modlindley",
        description="Stationary workload solver for modulated multiplicative recursions.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(p, seed=False, tol=False):
        p.add_argument("config", help="YAML instance config")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override sim seed")
        if tol:
            p.add_argument(
                "--tol", type=float, default=None, help="override the residual gate"
            )

    p_solve = sub.add_parser("solve", help="solve one instance, write report.{txt,json}")
    add_common(p_solve, tol=True)
    p_solve.set_defaults(handler=cmd_solve)

    p_cmp = sub.add_parser(
        "compare", help="solve + simulate, write comparison.csv (exit 4 on mismatch)"
    )
    add_common(p_cmp, seed=True, tol=True)
    p_cmp.set_defaults(handler=cmd_compare)

    p_s1 = sub.add_parser(
        "sweep-model1", help="coupled vs independent modulation over a service-scale grid"
    )
    add_common(p_s1)
    p_s1.add_argument("--u", default=None, help="comma-separated u grid (default 1,1.5,...,5)")
    p_s1.set_defaults(handler=cmd_sweep_model1)

    p_s2 = sub.add_parser(
        "sweep-model2", help="mean waiting time over a (p, u) grid"
    )
    add_common(p_s2)
    p_s2.add_argument("--p", default=None, help="comma-separated p grid (default 0.1,...,0.9)")
    p_s2.add_argument("--u", default=None, help="comma-separated u grid (default 1,1.5,...,5)")
    p_s2.set_defaults(handler=cmd_sweep_model2)

    p_sim = sub.add_parser("simulate", help="simulate only, write simulation.{txt,json}")
    add_common(p_sim, seed=True)
    p_sim.set_defaults(handler=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except (ConfigError, ReducibleChainError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except InstabilityError as exc:
        sys.stderr.write(f"unstable instance: {exc}\n")
        return EXIT_UNSTABLE
    except ModLindleyError as exc:
        sys.stderr.write(f"solver failure: {type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
