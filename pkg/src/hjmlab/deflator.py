"""Minimal local martingale deflator and martingale diagnostics.

The minimal deflator multiplies, per step, the exact exponential of the
Brownian tilt (lambda dW - |lambda|^2 dt / 2 - dt int psi dF) and the jump
factor prod (1 + psi(x)) over realized jumps, so positivity is structural.
Deflated asset prices deflator * spot * bond / numeraire are reconstructed
two independent ways: directly from simulated states, and through the
stochastic-exponential representation of the discounted price, whose gap is
pure discretization error.  Martingale testing uses fixed-time
cross-sectional means with a three-sigma convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .curves import cumtrapz
from .modelspec import ModelSpec

__all__ = [
    "DeflatedSeries",
    "InsufficientSampleError",
    "lmd_step",
    "lmd_step_factors",
    "deflated_series",
    "martingale_zscore",
    "martingale_report",
    "y_representation_check",
]


class InsufficientSampleError(ValueError):
    """Cross-sectional statistics need at least 100 paths."""


def lmd_step_factors(dt, dW, counts, lam, psi, spec: ModelSpec):
    """(continuous factor, jump factor) of one deflator step.

    Works on a single path (dW shape (d,)) or a batch (dW shape (p, d)).
    """
    drift = -0.5 * float(lam @ lam) * dt
    if spec.has_jumps:
        drift -= dt * float(np.dot(spec.jumps.weights, psi))
    cont = np.exp(dW @ lam + drift)
    if spec.has_jumps and counts is not None:
        jump = np.prod((1.0 + psi) ** np.asarray(counts), axis=-1)
    else:
        jump = 1.0
    return cont, jump


def lmd_step(
    z: float,
    dt: float,
    inputs,
    spec: ModelSpec,
    t: float = 0.0,
    risk_neutral: bool = False,
) -> float:
    """One exact multiplicative update of the minimal deflator.

    inputs carries .dW and .jump_counts for the step; strict positivity
    holds because psi > -1.
    """
    if z <= 0.0:
        raise ValueError("deflator must be strictly positive")
    if risk_neutral:
        lam = np.zeros(spec.d)
        psi = np.zeros(max(spec.n_atoms, 1))
    else:
        lam = np.asarray(spec.market_price.lam_at(t), dtype=float)
        psi = np.asarray(spec.market_price.psi_at(t), dtype=float)
    cont, jump = lmd_step_factors(
        dt, np.asarray(inputs.dW, dtype=float), inputs.jump_counts, lam, psi, spec
    )
    return float(z * cont * jump)


@dataclass
class DeflatedSeries:
    """Deflated prices deflator * spot * bond / numeraire across paths.

    values has shape (paths, times, indices, maturities); initial holds the
    t = 0 cross-section S^i_0 B^i(0, T).
    """

    times: np.ndarray
    indices: np.ndarray
    maturities: np.ndarray
    values: np.ndarray
    initial: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]


def deflated_series(
    ens,
    maturities: Optional[Sequence[float]] = None,
    indices: Optional[Sequence[int]] = None,
) -> DeflatedSeries:
    """Build the deflated-price panel from an ensemble's observables."""
    mats = np.asarray(
        ens.maturities if maturities is None else maturities, dtype=float
    )
    idx = np.asarray(
        range(ens.n_indices) if indices is None else indices, dtype=int
    )
    cols = []
    for t_mat in mats:
        hits = np.nonzero(np.isclose(ens.maturities, t_mat, atol=1e-12))[0]
        if hits.size == 0:
            raise ValueError(
                f"maturity {t_mat} was not recorded by the simulation"
            )
        cols.append(int(hits[0]))
    bonds = np.exp(-ens.bond_integrals[:, :, idx, :][:, :, :, cols])
    vals = (
        ens.deflator[:, :, None, None]
        * ens.spots[:, :, idx, None]
        / ens.numeraire[:, :, None, None]
        * bonds
    )
    initial = vals[:, 0]
    if not np.allclose(initial, initial[0:1], equal_nan=True):
        raise AssertionError("t=0 deflated prices must be path-independent")
    return DeflatedSeries(ens.obs_times, idx, mats, vals, initial[0])


def martingale_zscore(series: DeflatedSeries, t: float) -> np.ndarray:
    """Cross-sectional z-scores (mean_t - value_0) / SE at one grid time.

    Zero-variance columns score 0 when the mean matches the initial value
    exactly (degenerate deterministic case) and +-inf otherwise.
    """
    if series.n_paths < 100:
        raise InsufficientSampleError(
            f"need >= 100 paths for z-scores, got {series.n_paths}"
        )
    hits = np.nonzero(np.isclose(series.times, t, atol=1e-12))[0]
    if hits.size == 0:
        raise ValueError(f"time {t} not on the recorded observation grid")
    x = series.values[:, int(hits[0])]
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(series.n_paths)
    diff = mean - series.initial
    # a degenerate (deterministic) cross-section leaves only rounding noise
    # in the variance; score it by exact equality instead
    fp_scale = np.maximum(np.abs(series.initial), np.abs(mean)) + 1e-300
    degenerate = se <= 1e-13 * fp_scale
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(
            degenerate,
            np.where(np.abs(diff) <= 1e-12 * fp_scale, 0.0, np.inf),
            diff / np.where(degenerate, 1.0, se),
        )
    return z


def martingale_report(series: DeflatedSeries, threshold: float = 3.0) -> dict:
    """Per (index, maturity, time) means, standard errors and z-scores."""
    rows = []
    passed = True
    for kt, t in enumerate(series.times):
        if kt == 0:
            continue
        z_t = martingale_zscore(series, float(t))
        x = series.values[:, kt]
        mean = x.mean(axis=0)
        se = x.std(axis=0, ddof=1) / math.sqrt(series.n_paths)
        for a, i in enumerate(series.indices):
            for bix, t_mat in enumerate(series.maturities):
                if t_mat < t - 1e-12:
                    continue
                ok = bool(abs(z_t[a, bix]) <= threshold)
                passed = passed and ok
                rows.append(
                    {
                        "index": int(i),
                        "maturity": float(t_mat),
                        "t": float(t),
                        "mean": float(mean[a, bix]),
                        "se": float(se[a, bix]),
                        "initial": float(series.initial[a, bix]),
                        "zscore": float(z_t[a, bix]),
                        "status": "PASS" if ok else "FAIL",
                    }
                )
    return {"passed": passed, "threshold": threshold, "cells": rows}


class _YTracker:
    """Accumulates the stochastic-exponential representation of one
    discounted price along every path and its gap to the direct value."""

    needs_values = True

    def __init__(self, index: int, maturity: float):
        self.index = index
        self.maturity = maturity
        self.max_rel_gap = 0.0

    def start(self, plan, spec, fam0):
        from .curves import integral_op

        self.spec = spec
        self.dt = plan.grid.dt
        self.plan = plan
        i = self.index
        betas = spec.vol.beta_curves(fam0)
        self.bbar = np.stack(
            [cumtrapz(betas[i][j].values(), self.dt) for j in range(spec.d)]
        )  # (d, nodes)
        self.gbar = None
        if spec.has_jumps:
            self.gbar = np.stack(
                [
                    cumtrapz(
                        spec.jump_vol.gamma_curves(fam0, k, float(x))[i].values(),
                        self.dt,
                    )
                    for k, x in enumerate(spec.jumps.atoms)
                ]
            )  # (K, nodes)
        node0 = int(round(self.maturity / self.dt))
        iv0 = cumtrapz(fam0[i].values(), self.dt)[node0]
        s0 = 1.0 if plan.initial_spots is None else plan.initial_spots[i]
        self.scale0 = s0 * math.exp(-iv0)
        self.e_acc = {}

    def step(self, lo, k, data):
        spec, i, dt = self.spec, self.index, self.dt
        t_k = k * dt
        tau = self.maturity - t_k
        if tau < -1e-12:
            return
        node = int(round(tau / dt))
        lam, b, psi, c = data["market"]
        a_h0, a_dv = data["alpha"]
        h0s_pre = data["h0s_pre"]
        p = h0s_pre.shape[0]
        if lo not in self.e_acc:
            self.e_acc[lo] = np.ones(p)

        # alpha-bar at tau from the step's own drift curve
        avals = a_h0[i] + cumtrapz(a_dv[i], dt)
        abar = cumtrapz(avals, dt)[node]
        bbar_tau = self.bbar[:, node]  # (d,)
        r_path = h0s_pre[:, 0]
        f_path = h0s_pre[:, i]
        ai = spec.spots.a[i]
        if ai is None:
            jump_psi = (
                float(np.dot(spec.jumps.weights, c[i] * psi))
                if spec.has_jumps
                else 0.0
            )
            a_path = r_path - f_path - float(b[i] @ lam) - jump_psi
        else:
            a_path = np.full(p, float(ai(t_k)))
        sigma = b[i][None, :] - bbar_tau[None, :]  # (1, d)
        comp_v = 0.0
        if spec.has_jumps:
            comp_v = float(
                np.dot(spec.jumps.weights, c[i] - self.gbar[:, node])
            )
        a_det = (
            a_path
            - r_path
            + f_path
            - abar
            + 0.5 * float(bbar_tau @ bbar_tau)
            - float(bbar_tau @ b[i])
            - comp_v
            - 0.5 * float((sigma @ sigma.T)[0, 0])
        )
        ln_inc = a_det * dt + data["dW"] @ sigma[0]
        e = self.e_acc[lo] * np.exp(ln_inc)
        if spec.has_jumps:
            cnt = data["counts"]
            jump_mult = np.prod(
                ((1.0 + c[i]) * np.exp(-self.gbar[:, node]))[None, :]
                ** cnt,
                axis=1,
            )
            e = e * jump_mult
        self.e_acc[lo] = e

        # compare to the direct discounted price at t_{k+1}
        tau_next = self.maturity - (k + 1) * dt
        if tau_next < -1e-12:
            return
        node_next = int(round(tau_next / dt))
        direct = (
            data["spots"][:, i]
            * np.exp(-data["ivals"][:, i, node_next])
            / data["numeraire"]
        )
        eprice = self.scale0 * e
        denom = np.maximum(np.abs(direct), 1e-30)
        gap = np.abs(eprice - direct) / denom
        gap = np.where(
            (np.abs(direct) < 1e-30) & (np.abs(eprice) < 1e-30), 0.0, gap
        )
        self.max_rel_gap = max(self.max_rel_gap, float(gap.max()))

    def finish(self, ens):
        pass


def y_representation_check(spec: ModelSpec, plan, index: int, maturity: float):
    """Max relative pathwise gap between the direct discounted price and its
    stochastic-exponential reconstruction (shared noise; the gap is pure
    time-discretization error)."""
    from .solver import simulate

    tracker = _YTracker(index, maturity)
    forced = _with_state_engine(plan)
    simulate(forced, spec, observers=(tracker,))
    return tracker.max_rel_gap


def _with_state_engine(plan):
    from dataclasses import replace

    return replace(plan, engine="state")
