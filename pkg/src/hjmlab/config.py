"""Scenario configuration: strict TOML parsing into runnable plans.

Unknown keys are errors, not warnings, so a misspelled model parameter can
never be silently ignored.  Semantic errors carry the offending key path
and reason; TOML syntax errors keep the parser's line information.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .curves import SpaceParams
from .drift import REAL_WORLD, RISK_NEUTRAL
from .modelspec import Grid, InitialCurveSpec, ModelSpec, SpecificationError
from .presets import (
    deterministic_spread_model,
    ordered_cone_model,
    vasicek_jump_model,
    vasicek_model,
)
from .solver import SimulationPlan

__all__ = ["ScenarioConfig", "ConfigError", "parse_scenario", "COMMANDS"]

COMMANDS = (
    "simulate",
    "verify-drift",
    "check-monotonicity",
    "realize-affine",
    "mmm",
    "martingale-test",
)

_SCHEMA = {
    "grids": {"dt", "dxi", "horizon_t", "horizon_xi"},
    "simulation": {
        "n_paths",
        "maturities",
        "obs_stride",
        "mode",
        "antithetic",
        "snapshots",
        "track_invariance",
        "perturbation",
        "initial_spots",
        "engine",
        "chunk_size",
    },
    "model": {
        "kind",
        "m",
        "c",
        "delta",
        "lambda",
        "b_risky",
        "r",
        "a_risky",
        "spread",
        "c_riskless",
        "c_risky",
        "delta_riskless",
        "delta_risky",
        "with_jumps",
        "jump_intensity",
        "gamma_scale_risky",
        "c_spot",
        "initial",
        "jumps",
    },
    "model.initial": {"kind", "levels", "amps", "rates"},
    "model.jumps": {
        "atoms",
        "weights",
        "gamma_scale",
        "gamma_delta",
        "c_spot",
        "psi",
        "lambda_bound",
    },
    "mmm": {"alpha0", "eta", "r", "a_spreads", "x0"},
    "space": {"rho", "rho_prime"},
    "checks": {
        "drift_tol",
        "drift_points",
        "drift_maturity_span",
        "martingale_threshold",
        "gap_tol",
        "cone_samples",
        "refinement_factors",
    },
}
_TOP_KEYS = {"n_paths", "seed", "output_dir", "commands"} | set(
    k for k in _SCHEMA if "." not in k
)


class ConfigError(ValueError):
    """Invalid scenario document; message lists (key, reason) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(
            "invalid scenario config:\n"
            + "\n".join(f"  {key}: {reason}" for key, reason in self.errors)
        )


@dataclass
class ScenarioConfig:
    """Validated scenario: grids, model selection, commands, outputs."""

    grid: Grid
    n_paths: int = 10_000
    seed: int = 42
    output_dir: str = "out"
    commands: tuple = ()
    model: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    mmm: dict = field(default_factory=dict)
    space: SpaceParams = field(default_factory=lambda: SpaceParams(1.0, 1.5))
    checks: dict = field(default_factory=dict)
    raw_text: str = ""

    def build_model(self) -> ModelSpec:
        return _build_model(self.model)

    def plan(self, **overrides) -> SimulationPlan:
        sim = dict(self.simulation)
        sim.update(overrides)
        mode = sim.pop("mode", REAL_WORLD)
        spots = sim.pop("initial_spots", None)
        return SimulationPlan(
            grid=self.grid,
            n_paths=sim.pop("n_paths", self.n_paths),
            seed=sim.pop("seed", self.seed),
            maturities=tuple(sim.pop("maturities", ())),
            obs_stride=sim.pop("obs_stride", 1),
            mode=mode,
            perturbation=sim.pop("perturbation", 0.0),
            antithetic=sim.pop("antithetic", False),
            initial_spots=None if spots is None else np.asarray(spots, float),
            snapshots=sim.pop("snapshots", False),
            track_invariance=sim.pop("track_invariance", False),
            engine=sim.pop("engine", "auto"),
            chunk_size=sim.pop("chunk_size", 4096),
            **sim,
        )


def _check_unknown(table: dict, schema_key: str, path: str, errors: list):
    allowed = _SCHEMA[schema_key]
    for key in table:
        if key not in allowed:
            errors.append((f"{path}.{key}", "unknown key (strict mode)"))


def _build_initial(tbl: dict) -> Optional[InitialCurveSpec]:
    kind = tbl.get("kind", "flat")
    if kind == "flat":
        return InitialCurveSpec.flat(tbl["levels"])
    if kind == "exp_decay":
        return InitialCurveSpec.exp_decay(tbl["levels"], tbl["amps"], tbl["rates"])
    raise SpecificationError(f"unknown initial curve kind {kind!r}")


def _build_model(model: dict) -> ModelSpec:
    kind = model.get("kind", "vasicek")
    initial = None
    if "initial" in model:
        initial = _build_initial(model["initial"])
    if kind == "vasicek":
        return vasicek_model(
            m=model.get("m", 1),
            c=model.get("c", (0.008, 0.01)),
            delta=model.get("delta", (-1.2, -1.0)),
            lam=model.get("lambda", 0.0),
            b_risky=model.get("b_risky", 0.0),
            r=model.get("r", 0.02),
            initial=initial,
        )
    if kind == "vasicek_jump":
        jumps = model.get("jumps", {})
        return vasicek_jump_model(
            m=model.get("m", 1),
            c=model.get("c", (0.008, 0.01)),
            delta=model.get("delta", (-1.2, -1.0)),
            lam=model.get("lambda", 0.0),
            r=model.get("r", 0.02),
            atoms=jumps.get("atoms", (1.0,)),
            weights=jumps.get("weights", (0.4,)),
            gamma_scale=jumps.get("gamma_scale", (0.004, 0.005)),
            gamma_delta=jumps.get("gamma_delta"),
            c_spot=jumps.get("c_spot", 0.05),
            psi=jumps.get("psi", 0.0),
            lambda_bound=jumps.get("lambda_bound", 1.5),
            initial=initial,
        )
    if kind == "ordered_cone":
        return ordered_cone_model(
            m=model.get("m", 3),
            c_riskless=model.get("c_riskless", 0.006),
            c_risky=model.get("c_risky", 0.01),
            delta_riskless=model.get("delta_riskless", -1.2),
            delta_risky=model.get("delta_risky", -1.0),
            lam=model.get("lambda", 0.0),
            r=model.get("r", 0.02),
            spread=model.get("spread", 0.01),
            with_jumps=model.get("with_jumps", False),
            jump_intensity=model.get("jump_intensity", 0.5),
            gamma_scale_risky=model.get("gamma_scale_risky", 0.004),
            c_spot=model.get("c_spot", 0.02),
        )
    if kind == "deterministic_spread":
        return deterministic_spread_model(
            m=model.get("m", 2),
            a_risky=model.get("a_risky", (-0.02, -0.01)),
            r=model.get("r", 0.02),
            spread=model.get("spread", 0.01),
        )
    raise SpecificationError(f"unknown model kind {kind!r}")


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document; raise ConfigError otherwise."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:  # carries line/column info
        raise ConfigError([("<syntax>", str(exc))]) from None

    errors: list = []
    for key in doc:
        if key not in _TOP_KEYS:
            errors.append((key, "unknown key (strict mode)"))

    grids = doc.get("grids")
    grid = None
    if grids is None:
        errors.append(("grids", "required table is missing"))
    else:
        _check_unknown(grids, "grids", "grids", errors)
        dt = grids.get("dt")
        if dt is None:
            errors.append(("grids.dt", "required"))
        dxi = grids.get("dxi", dt)
        if dt is not None and dxi != dt:
            errors.append(
                ("grids.dxi", "grid contract violated: dt must equal dxi")
            )
        try:
            if dt is not None:
                grid = Grid(
                    dt=float(dt),
                    horizon_t=float(grids.get("horizon_t", 1.0)),
                    horizon_xi=float(grids.get("horizon_xi", 2.0)),
                )
        except (SpecificationError, TypeError, ValueError) as exc:
            errors.append(("grids", str(exc)))

    sim = dict(doc.get("simulation", {}))
    if "simulation" in doc:
        _check_unknown(doc["simulation"], "simulation", "simulation", errors)
    mode = sim.get("mode", REAL_WORLD)
    if mode not in (REAL_WORLD, RISK_NEUTRAL):
        errors.append(
            ("simulation.mode", f"must be {REAL_WORLD!r} or {RISK_NEUTRAL!r}")
        )

    model = dict(doc.get("model", {}))
    if "model" in doc:
        _check_unknown(doc["model"], "model", "model", errors)
        if "initial" in doc["model"]:
            _check_unknown(
                doc["model"]["initial"], "model.initial", "model.initial", errors
            )
        if "jumps" in doc["model"]:
            _check_unknown(
                doc["model"]["jumps"], "model.jumps", "model.jumps", errors
            )
            weights = doc["model"]["jumps"].get("weights", ())
            if any(w < 0 for w in weights):
                errors.append(
                    (
                        "model.jumps.weights",
                        "jump intensities must be finite and >= 0 "
                        "(jump measure invariant)",
                    )
                )

    if "mmm" in doc:
        _check_unknown(doc["mmm"], "mmm", "mmm", errors)
        if doc["mmm"].get("alpha0", 0.04) <= 0 or doc["mmm"].get("eta", 0.1) <= 0:
            errors.append(("mmm", "alpha0 and eta must be > 0"))

    space = SpaceParams(1.0, 1.5)
    if "space" in doc:
        _check_unknown(doc["space"], "space", "space", errors)
        try:
            space = SpaceParams(
                float(doc["space"].get("rho", 1.0)),
                float(doc["space"].get("rho_prime", 1.5)),
            )
        except ValueError as exc:
            errors.append(("space", str(exc)))

    if "checks" in doc:
        _check_unknown(doc["checks"], "checks", "checks", errors)

    commands = tuple(doc.get("commands", ()))
    for cmd in commands:
        if cmd not in COMMANDS:
            errors.append(("commands", f"unknown command {cmd!r}"))

    n_paths = int(doc.get("n_paths", 10_000))
    if n_paths < 1:
        errors.append(("n_paths", "must be >= 1"))

    mats = sim.get("maturities", ())
    if grid is not None and mats and max(mats) > grid.horizon_xi + 1e-12:
        errors.append(
            (
                "grids.horizon_xi",
                "must cover horizon_t + max requested maturity "
                f"(need >= {max(mats)})",
            )
        )

    if not errors and "model" in doc:
        try:
            _build_model(model)
        except (SpecificationError, ValueError, KeyError) as exc:
            errors.append(("model", str(exc)))

    if errors:
        raise ConfigError(errors)

    return ScenarioConfig(
        grid=grid,
        n_paths=n_paths,
        seed=int(doc.get("seed", 42)),
        output_dir=str(doc.get("output_dir", "out")),
        commands=commands,
        model=model,
        simulation=sim,
        mmm=dict(doc.get("mmm", {})),
        space=space,
        checks=dict(doc.get("checks", {})),
        raw_text=text,
    )
