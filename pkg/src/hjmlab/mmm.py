"""Closed-form minimal-market-model oracle.

A viable real-world model with no risk-neutral measure: the discounted
growth-optimal portfolio follows a square-root diffusion with exponential
drift scale, its reciprocal is the deflator, and riskless bonds price
strictly below the pure discount value by the market-price-of-risk factor

    M(t, T) = 1 - exp( -xbar_t / (2 (phi(T) - phi(t))) ),
    phi(t)  = alpha0 / (4 eta) (e^{eta t} - 1).

Risky spreads are deterministic drifts, giving closed-form risky bonds and
forward curves; everything here serves as an analytic target for the
Monte-Carlo and deflator machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .curves import Curve, CurveFamily
from .deflator import DeflatedSeries
from .modelspec import TimeFn

__all__ = [
    "MmmParams",
    "phi_time",
    "alpha_star",
    "mprc",
    "m_contribution",
    "gop_step",
    "bond0_mmm",
    "bond_mmm",
    "forward_curve_mmm",
    "forward_family_mmm",
    "simulate_gop",
    "gop_deflated_series",
    "slm_check",
]


@dataclass(frozen=True)
class MmmParams:
    """Drift scale alpha0 e^{eta t}, deterministic short rate and spreads."""

    alpha0: float
    eta: float
    r: TimeFn
    a_spreads: tuple = ()
    x0: float = 1.0

    def __post_init__(self):
        if self.alpha0 <= 0.0 or self.eta <= 0.0:
            raise ValueError("alpha0 and eta must be > 0")
        if self.x0 <= 0.0:
            raise ValueError("initial discounted GOP must be > 0")
        object.__setattr__(
            self, "a_spreads", tuple(TimeFn.wrap(a) for a in self.a_spreads)
        )

    @classmethod
    def build(cls, alpha0=0.04, eta=0.1, r=0.0, a_spreads=(), x0=1.0):
        return cls(alpha0, eta, TimeFn.wrap(r), tuple(a_spreads), x0)


def phi_time(p: MmmParams, t: float) -> float:
    """Time change alpha0/(4 eta) (e^{eta t} - 1), strictly increasing from 0."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    return p.alpha0 / (4.0 * p.eta) * math.expm1(p.eta * t)


def alpha_star(p: MmmParams, t) -> float:
    return p.alpha0 * np.exp(p.eta * np.asarray(t))


def mprc(p: MmmParams, t: float, maturity: float, xbar: float) -> float:
    """Market-price-of-risk contribution M(t, T) in (0, 1)."""
    if maturity <= t:
        raise ValueError("maturity must exceed t")
    if xbar <= 0.0:
        raise ValueError("discounted GOP must be > 0")
    dphi = phi_time(p, maturity) - phi_time(p, t)
    return -math.expm1(-xbar / (2.0 * dphi))


def m_contribution(p: MmmParams, t: float, maturity, xbar: float):
    """Forward-rate contribution m(t, T) = -d/dT log M(t, T), closed form.

    With u = xbar / (2 (phi(T) - phi(t))) the derivative collapses to
    u / expm1(u) * phi'(T) / (phi(T) - phi(t)); both limits are tame: the
    factor vanishes exponentially as T -> t and the whole term decays like
    the drift scale as T grows.
    """
    maturity = np.asarray(maturity, dtype=float)
    dphi = p.alpha0 / (4.0 * p.eta) * (
        np.expm1(p.eta * maturity) - math.expm1(p.eta * t)
    )
    dphi_dT = 0.25 * p.alpha0 * np.exp(p.eta * maturity)
    with np.errstate(over="ignore", invalid="ignore"):
        u = xbar / (2.0 * dphi)
        ratio = np.where(u > 700.0, 0.0, u / np.expm1(np.minimum(u, 700.0)))
    out = ratio * dphi_dT / dphi
    return float(out) if out.ndim == 0 else out


def gop_step(xbar, p: MmmParams, t: float, dt: float, dW):
    """Full-truncation Euler step of the discounted GOP, floored at zero."""
    a = alpha_star(p, t)
    x = np.asarray(xbar, dtype=float)
    out = x + a * dt + np.sqrt(np.clip(x, 0.0, None) * a) * np.asarray(dW)
    return np.clip(out, 0.0, None)


def bond0_mmm(p: MmmParams, t: float, maturity: float, xbar: float) -> float:
    """Riskless bond: discount times M(t, T); strictly below the discount."""
    if maturity <= t:
        raise ValueError("maturity must exceed t")
    disc = math.exp(-p.r.integral(t, maturity))
    return disc * mprc(p, t, maturity, xbar)


def bond_mmm(p: MmmParams, i: int, t: float, maturity: float, xbar: float) -> float:
    """Risky bond B^i = B^0 exp(int_t^T a^i) (deterministic spread case)."""
    if i == 0:
        return bond0_mmm(p, t, maturity, xbar)
    return bond0_mmm(p, t, maturity, xbar) * math.exp(
        p.a_spreads[i - 1].integral(t, maturity)
    )


def forward_rates_mmm(p: MmmParams, i: int, t: float, xbar: float, maturities):
    """f^i(t, T) = r(T) + m(t, T) - a^i(T) on an array of maturities > t."""
    mat = np.asarray(maturities, dtype=float)
    m_vals = np.where(mat > t, m_contribution(p, t, np.maximum(mat, t + 1e-300), xbar), 0.0)
    r_vals = np.asarray([float(p.r(x)) for x in mat])
    out = r_vals + m_vals
    if i > 0:
        out = out - np.asarray([float(p.a_spreads[i - 1](x)) for x in mat])
    return out


def forward_curve_mmm(
    p: MmmParams, i: int, t: float, xbar: float, grid_step: float, n_nodes: int
) -> Curve:
    """Forward curve in time-to-maturity with centered-difference derivative."""
    xi = grid_step * np.arange(n_nodes)
    vals = forward_rates_mmm(p, i, t, xbar, t + xi)
    dv = np.gradient(vals, grid_step)
    return Curve(float(vals[0]), dv, grid_step)


def forward_family_mmm(
    p: MmmParams, t: float, xbar: float, grid_step: float, n_nodes: int
) -> CurveFamily:
    curves = [
        forward_curve_mmm(p, i, t, xbar, grid_step, n_nodes)
        for i in range(len(p.a_spreads) + 1)
    ]
    return CurveFamily(tuple(curves))


def simulate_gop(
    p: MmmParams,
    dt: float,
    horizon: float,
    n_paths: int,
    seed: int,
    obs_stride: int = 1,
    chunk_size: int = 65536,
):
    """Ensemble of discounted-GOP paths; deterministic given the seed.

    Returns (obs_times, paths, diagnostics) with paths of shape
    (n_paths, n_obs); diagnostics reports how often truncation activated.
    """
    n_steps = int(round(horizon / dt))
    obs_idx = np.arange(0, n_steps + 1, max(1, obs_stride))
    if obs_idx[-1] != n_steps:
        obs_idx = np.append(obs_idx, n_steps)
    out = np.empty((n_paths, obs_idx.size))
    truncations = 0
    for lo in range(0, n_paths, chunk_size):
        hi = min(lo + chunk_size, n_paths)
        x = np.full(hi - lo, p.x0)
        dWs = np.empty((hi - lo, n_steps))
        for row, path in enumerate(range(lo, hi)):
            g = np.random.default_rng(np.random.Philox(key=[seed, path]))
            dWs[row] = g.standard_normal(n_steps) * math.sqrt(dt)
        pos = {int(k): j for j, k in enumerate(obs_idx)}
        if 0 in pos:
            out[lo:hi, 0] = x
        for k in range(n_steps):
            a = float(alpha_star(p, k * dt))
            drifted = x + a * dt + np.sqrt(np.clip(x, 0.0, None) * a) * dWs[:, k]
            truncations += int(np.sum(drifted < 0.0)) + int(np.sum(x < 0.0))
            x = np.clip(drifted, 0.0, None)
            if (k + 1) in pos:
                out[lo:hi, pos[k + 1]] = x
    diag = {
        "truncation_rate": truncations / float(n_paths * n_steps),
        "n_steps": n_steps,
    }
    return obs_idx * dt, out, diag


def gop_deflated_series(
    p: MmmParams,
    times: np.ndarray,
    paths: np.ndarray,
    maturities: Sequence[float],
    indices: Optional[Sequence[int]] = None,
) -> DeflatedSeries:
    """Deflated bond prices under the GOP deflator, as a cross-path panel.

    Deflating by 1/xbar and discounting leaves, up to a constant per cell,
    M(t, T) / xbar_t, whose conditional expectation closes the martingale;
    feeding this panel to the martingale tests exercises exactly that.
    """
    idx = np.asarray(
        range(len(p.a_spreads) + 1) if indices is None else indices, dtype=int
    )
    mats = np.asarray(maturities, dtype=float)
    n_paths, n_obs = paths.shape
    vals = np.empty((n_paths, n_obs, idx.size, mats.size))
    for kt, t in enumerate(times):
        for a, i in enumerate(idx):
            for b, t_mat in enumerate(mats):
                if t_mat <= t:
                    vals[:, kt, a, b] = np.nan
                    continue
                disc = math.exp(-p.r.integral(0.0, float(t)))
                bonds = np.array(
                    [
                        bond_mmm(p, int(i), float(t), float(t_mat), x)
                        if x > 0
                        else 0.0
                        for x in paths[:, kt]
                    ]
                )
                spot = (
                    1.0
                    if i == 0
                    else math.exp(p.a_spreads[i - 1].integral(0.0, float(t)))
                )
                vals[:, kt, a, b] = disc * spot * bonds / paths[:, kt]
    return DeflatedSeries(
        times=np.asarray(times),
        indices=idx,
        maturities=mats,
        values=vals,
        initial=vals[0, 0],
    )


def slm_check(
    p: MmmParams,
    maturity: float,
    n_paths: int,
    dt: float,
    seed: int,
    t: float = 0.0,
) -> dict:
    """Monte-Carlo check of E[xbar_t / xbar_T] against the closed form.

    The closed form is the strict-local-martingale signature: it is < 1,
    which is exactly why no risk-neutral measure exists here.
    """
    times, paths, diag = simulate_gop(
        p, dt, maturity, n_paths, seed, obs_stride=int(round(maturity / dt))
    )
    k_t = int(np.argmin(np.abs(times - t)))
    ratio = paths[:, k_t] / paths[:, -1]
    mc = float(ratio.mean())
    se = float(ratio.std(ddof=1) / math.sqrt(n_paths))
    closed = mprc(p, t, maturity, float(paths[0, k_t]) if t == 0 else np.nan)
    return {
        "mc_estimate": mc,
        "se": se,
        "closed_form": closed,
        "within_3se": bool(abs(mc - closed) <= 3.0 * se),
        "strictly_below_one": bool(mc < 1.0),
        "truncation_rate": diag["truncation_rate"],
    }
