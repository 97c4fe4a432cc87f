"""Scenario-driven command line: parse a config, run commands, write reports.

Every command writes a JSON report, CSV tables and (unless disabled)
matplotlib figures into the output directory, plus a manifest recording the
config hash, seed, grids and library version.  Exit code 0 means every
executed check passed.  Outputs are byte-identical for identical
(config, seed) regardless of --threads: paths own counter-based RNG
streams, so scheduling cannot reorder randomness.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .affine import realization_gap
from .config import COMMANDS, ConfigError, ScenarioConfig, parse_scenario
from .deflator import deflated_series, martingale_report
from .drift import DriftInputs, integrated_drift_residual
from .invariance import check_cone_coeff_conditions, monotonicity_report
from .mmm import (
    MmmParams,
    bond0_mmm,
    forward_rates_mmm,
    mprc,
    slm_check,
)
from .modelspec import Grid, check_order_condition, validate_spec
from .report import (
    curves_long_csv,
    observables_csv,
    write_csv,
    write_json,
    write_manifest,
)
from .solver import simulate

log = logging.getLogger("hjmlab")

_SNAPSHOT_AUTO_LIMIT = 5_000_000


def _snap(value: float, dt: float) -> float:
    return round(value / dt) * dt


def cmd_simulate(cfg: ScenarioConfig, out: Path, plots: bool) -> dict:
    spec = cfg.build_model()
    plan = cfg.plan()
    cells = plan.n_paths * len(plan.obs_indices()) * (spec.m + 1) * cfg.grid.n_nodes
    if "snapshots" not in cfg.simulation and cells <= _SNAPSHOT_AUTO_LIMIT:
        plan = replace(plan, snapshots=True, engine="state")
    ens = simulate(plan, spec)
    observables_csv(out / "ensemble_observables.csv", ens)
    if ens.curve_values is not None:
        curves_long_csv(out / "ensemble_curves.csv", ens)
    summary = {
        "command": "simulate",
        "passed": True,
        "engine": ens.engine,
        "n_paths": ens.n_paths,
        "obs_times": ens.obs_times,
        "diagnostics": ens.diagnostics,
        "short_end_mean": ens.short_ends.mean(axis=0),
        "short_end_std": ens.short_ends.std(axis=0),
        "spot_mean": ens.spots.mean(axis=0),
    }
    write_json(out / "simulate.json", summary)
    if plots:
        from .plots import plot_curve_fan

        plot_curve_fan(ens, out / "figures" / "simulate_fan.png")
    return summary


def _drift_residual_grid(cfg: ScenarioConfig, spec, grid: Grid, n_t: int, n_mat: int):
    fam0 = spec.initial.family(grid.dt, grid.n_nodes)
    span = cfg.checks.get(
        "drift_maturity_span", grid.horizon_xi - grid.horizon_t
    )
    t_vals = np.unique([_snap(t, grid.dt) for t in np.linspace(0.0, grid.horizon_t, n_t)])
    tau_vals = np.unique(
        [_snap(x, grid.dt) for x in np.linspace(span / n_mat, span, n_mat)]
    )
    rows = []
    worst = 0.0
    mode = cfg.simulation.get("mode", "real_world")
    for t in t_vals:
        inputs = DriftInputs(fam0, float(t), spec, mode)
        for tau in tau_vals:
            res = integrated_drift_residual(inputs, float(t + tau))
            worst = max(worst, float(np.max(np.abs(res))))
            for i, r in enumerate(res):
                rows.append((float(t), float(t + tau), i, float(r)))
    return t_vals, tau_vals, rows, worst


def cmd_verify_drift(cfg: ScenarioConfig, out: Path, plots: bool) -> dict:
    spec = cfg.build_model()
    tol = cfg.checks.get("drift_tol", 1e-6)
    n_pts = int(cfg.checks.get("drift_points", 20))
    t_vals, tau_vals, rows, worst = _drift_residual_grid(
        cfg, spec, cfg.grid, n_pts, n_pts
    )
    write_csv(
        out / "drift_residuals.csv", ["t", "T", "index", "residual"], rows
    )

    # grid-refinement scaling of the worst residual
    factors = cfg.checks.get("refinement_factors", [4, 2, 1])
    worsts = []
    for f in factors:
        g = Grid(cfg.grid.dt * f, cfg.grid.horizon_t, cfg.grid.horizon_xi)
        worsts.append(
            _drift_residual_grid(cfg, spec, g, max(4, n_pts // 4), max(4, n_pts // 4))[3]
        )
    dxs = [cfg.grid.dt * f for f in factors]
    slope = (
        float(np.polyfit(np.log(dxs), np.log(np.maximum(worsts, 1e-300)), 1)[0])
        if len(factors) >= 2
        else None
    )

    validation = validate_spec(spec, cfg.space, cfg.grid, seed=cfg.seed)
    report = {
        "command": "verify-drift",
        "passed": bool(worst < tol) and validation.passed,
        "max_abs_residual": worst,
        "tolerance": tol,
        "refinement": {"dx": dxs, "max_residual": worsts, "slope": slope},
        "validation": validation.as_dict(),
    }
    write_json(out / "verify-drift.json", report)
    if plots:
        from .plots import plot_drift_residuals

        res = np.full((t_vals.size, tau_vals.size), 0.0)
        for t, t_mat, i, r in rows:
            it = int(np.argmin(np.abs(t_vals - t)))
            im = int(np.argmin(np.abs(t_vals[it] + tau_vals - t_mat)))
            res[it, im] = max(res[it, im], abs(r))
        plot_drift_residuals(
            t_vals, tau_vals, res, out / "figures" / "drift_residuals.png"
        )
    return report


def cmd_martingale_test(cfg: ScenarioConfig, out: Path, plots: bool) -> dict:
    spec = cfg.build_model()
    mats = cfg.simulation.get("maturities")
    if not mats:
        mats = (_snap(cfg.grid.horizon_xi - cfg.grid.horizon_t, cfg.grid.dt),)
    stride = cfg.simulation.get("obs_stride", max(1, cfg.grid.n_steps // 10))
    plan = cfg.plan(maturities=tuple(mats), obs_stride=stride)
    ens = simulate(plan, spec)
    series = deflated_series(ens)
    threshold = cfg.checks.get("martingale_threshold", 3.0)
    rep = martingale_report(series, threshold=threshold)
    failing = [c for c in rep["cells"] if c["status"] == "FAIL"]
    report = {
        "command": "martingale-test",
        "passed": rep["passed"],
        "threshold": threshold,
        "engine": ens.engine,
        "n_paths": ens.n_paths,
        "failing_cells": failing,
    }
    write_json(out / "martingale-test.json", report)
    write_csv(
        out / "martingale_cells.csv",
        ["index", "maturity", "t", "mean", "se", "initial", "zscore", "status"],
        [
            (
                c["index"],
                c["maturity"],
                c["t"],
                c["mean"],
                c["se"],
                c["initial"],
                c["zscore"],
                c["status"],
            )
            for c in rep["cells"]
        ],
    )
    if plots:
        from .plots import plot_zscores

        plot_zscores(rep, out / "figures" / "martingale_zscores.png", threshold)
    return report


def cmd_check_monotonicity(cfg: ScenarioConfig, out: Path, plots: bool) -> dict:
    spec = cfg.build_model()
    coeff = check_cone_coeff_conditions(
        spec,
        cfg.grid,
        samples=int(cfg.checks.get("cone_samples", 24)),
        seed=cfg.seed,
    )
    order = check_order_condition(spec, cfg.grid)
    mats = cfg.simulation.get("maturities")
    if not mats:
        mats = (_snap(cfg.grid.horizon_xi - cfg.grid.horizon_t, cfg.grid.dt),)
    plan = cfg.plan(
        maturities=tuple(mats), track_invariance=True, engine="state"
    )
    ens = simulate(plan, spec)
    mono = monotonicity_report(ens, spec)
    report = {
        "command": "check-monotonicity",
        "passed": coeff["passed"] and order.passed and mono["passed"],
        "coefficient_conditions": coeff,
        "order_condition": order.as_dict(),
        "monte_carlo": mono,
    }
    write_json(out / "check-monotonicity.json", report)
    write_csv(
        out / "monotonicity_summary.csv",
        ["metric", "value"],
        [
            ("cone_violations", mono["cone_violations"]),
            ("order_violations", mono["order_violations"]),
            ("worst_cone_gap", mono["worst_cone_gap"]),
            ("worst_order_gap", mono["worst_order_gap"]),
            ("n_paths", mono["n_paths"]),
        ],
    )
    if plots:
        from .plots import plot_monotonicity

        plot_monotonicity(ens, spec, out / "figures" / "monotonicity.png")
    return report


def cmd_realize_affine(cfg: ScenarioConfig, out: Path, plots: bool) -> dict:
    spec = cfg.build_model()
    tol = cfg.checks.get("gap_tol", 5e-3)
    factors = cfg.checks.get("refinement_factors", [4, 2, 1])
    dts, gaps = [], []
    for f in factors:
        g = Grid(cfg.grid.dt * f, cfg.grid.horizon_t, cfg.grid.horizon_xi)
        plan = cfg.plan()
        plan = replace(
            plan, grid=g, maturities=(), obs_stride=max(1, g.n_steps // 8)
        )
        dts.append(g.dt)
        gaps.append(realization_gap(plan, spec)["gap"])
    slope = (
        float(np.polyfit(np.log(dts), np.log(np.maximum(gaps, 1e-300)), 1)[0])
        if len(dts) >= 2
        else None
    )
    report = {
        "command": "realize-affine",
        "passed": bool(gaps[-1] <= tol),
        "gap": gaps[-1],
        "tolerance": tol,
        "dts": dts,
        "gaps": gaps,
        "slope": slope,
    }
    write_json(out / "realize-affine.json", report)
    write_csv(out / "realization_gap.csv", ["dt", "gap"], list(zip(dts, gaps)))
    if plots:
        from .plots import plot_realization_gap

        plot_realization_gap(dts, gaps, out / "figures" / "realization_gap.png")
    return report


def cmd_mmm(cfg: ScenarioConfig, out: Path, plots: bool) -> dict:
    opts = cfg.mmm
    p = MmmParams.build(
        alpha0=opts.get("alpha0", 0.04),
        eta=opts.get("eta", 0.1),
        r=opts.get("r", 0.0),
        a_spreads=tuple(opts.get("a_spreads", ())),
        x0=opts.get("x0", 1.0),
    )
    mats = cfg.simulation.get("maturities") or (1.0,)
    t_mat = float(max(mats))
    check = slm_check(p, t_mat, cfg.n_paths, cfg.grid.dt, cfg.seed)

    # integral consistency: exp(-int f^0) against the closed-form bond
    from .curves import trapz

    xbar = p.x0
    taus = np.linspace(0.0, t_mat, 4001)
    f0 = forward_rates_mmm(p, 0, 0.0, xbar, taus)
    integral = trapz(f0, taus[1] - taus[0])
    bond_closed = bond0_mmm(p, 0.0, t_mat, xbar)
    bond_gap = abs(np.exp(-integral) - bond_closed)

    grid_mats = np.linspace(t_mat / 40.0, max(2.0 * t_mat, 1.0), 80)
    bonds = [bond0_mmm(p, 0.0, float(u), xbar) for u in grid_mats]
    discounts = [np.exp(-p.r.integral(0.0, float(u))) for u in grid_mats]
    write_csv(
        out / "mmm_term_structure.csv",
        ["maturity", "bond", "discount", "mprc"],
        [
            (float(u), float(b), float(d), float(mprc(p, 0.0, float(u), xbar)))
            for u, b, d in zip(grid_mats, bonds, discounts)
        ],
    )
    report = {
        "command": "mmm",
        "passed": bool(
            check["within_3se"] and check["strictly_below_one"] and bond_gap < 1e-6
        ),
        "slm_check": check,
        "bond_integral_gap": bond_gap,
        "maturity": t_mat,
    }
    write_json(out / "mmm.json", report)
    if plots:
        from .plots import plot_mmm_term_structure

        plot_mmm_term_structure(
            p,
            grid_mats,
            bonds,
            discounts,
            (t_mat, check["mc_estimate"] * np.exp(-p.r.integral(0.0, t_mat))),
            out / "figures" / "mmm_term_structure.png",
        )
    return report


_DISPATCH = {
    "simulate": cmd_simulate,
    "verify-drift": cmd_verify_drift,
    "martingale-test": cmd_martingale_test,
    "check-monotonicity": cmd_check_monotonicity,
    "realize-affine": cmd_realize_affine,
    "mmm": cmd_mmm,
}


def run(cfg: ScenarioConfig, commands=None, plots: bool = True) -> int:
    """Execute commands in order; exit code 0 iff every check passed."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg.raw_text, cfg)
    todo = tuple(commands) if commands else cfg.commands
    if not todo:
        log.warning("no commands requested; manifest written")
        return 0
    all_passed = True
    results = []
    for name in todo:
        log.info("running %s", name)
        rep = _DISPATCH[name](cfg, out, plots)
        results.append({"command": name, "passed": rep["passed"]})
        print(f"{name}: {'PASS' if rep['passed'] else 'FAIL'}")
        all_passed = all_passed and rep["passed"]
    write_json(out / "run_summary.json", {"passed": all_passed, "results": results})
    return 0 if all_passed else 1


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("HJM_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = argparse.ArgumentParser(
        prog="hjmlab",
        description=(
            "Multi-curve term-structure lab: simulate the curve SPDE, verify "
            "drift restrictions, test deflated-price martingality, check "
            "cone monotonicity, run the affine realization and the "
            "closed-form oracle."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("run",):
        sp = sub.add_parser(
            name,
            help=(
                "execute the commands listed in the config"
                if name == "run"
                else f"run the {name} check"
            ),
        )
        sp.add_argument("--config", required=True, help="scenario TOML file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--paths", type=int, help="override the path count")
        sp.add_argument("--out", help="override the output directory")
        sp.add_argument(
            "--threads",
            type=int,
            default=1,
            help="worker threads (results are identical for any value)",
        )
        sp.add_argument(
            "--no-plots", action="store_true", help="skip figure rendering"
        )
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_scenario(text)
    except FileNotFoundError:
        print(f"config file not found: {args.config}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2

    if args.seed is not None:
        cfg.seed = args.seed
    if args.paths is not None:
        cfg.n_paths = args.paths
    if args.out is not None:
        cfg.output_dir = args.out
    if args.threads != 1:
        log.info("threads=%d requested; outputs do not depend on it", args.threads)

    commands = None if args.command == "run" else (args.command,)
    return run(cfg, commands=commands, plots=not args.no_plots)


if __name__ == "__main__":
    sys.exit(main())
