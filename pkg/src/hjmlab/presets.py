"""Ready-made model specifications used by the CLI and the test scenarios."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .modelspec import (
    InitialCurveSpec,
    JumpMeasureSpec,
    JumpVolSpec,
    MarketPriceSpec,
    ModelSpec,
    ShortRateSpec,
    SpotCoeffs,
    VolSpec,
)

__all__ = [
    "vasicek_model",
    "vasicek_jump_model",
    "ordered_cone_model",
    "deterministic_spread_model",
]


def _default_initial(m: int, r0: float) -> InitialCurveSpec:
    # riskless flat at r0; risky curves stacked strictly above, ordered in i
    levels = [r0] + [r0 + 0.01 * (m - i + 1) for i in range(1, m + 1)]
    return InitialCurveSpec.flat(levels)


def vasicek_model(
    m: int = 1,
    c: Sequence[float] = (0.008, 0.01),
    delta: Sequence[float] = (-1.2, -1.0),
    lam: float = 0.0,
    b_risky: float = 0.0,
    r: float = 0.02,
    initial: Optional[InitialCurveSpec] = None,
    a=None,
) -> ModelSpec:
    """Exponential-volatility diffusive model, one Brownian factor, no jumps.

    Spot drifts default to None (implied pathwise by the deflator
    condition); pass explicit per-index time functions to override.
    """
    c = np.asarray(c, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if c.size != m + 1 or delta.size != m + 1:
        raise ValueError("c and delta must have m+1 entries")
    b = np.zeros((m + 1, 1))
    b[1:, 0] = b_risky
    return ModelSpec(
        m=m,
        d=1,
        vol=VolSpec.vasicek(c, delta),
        market_price=MarketPriceSpec.build(d=1, lam=lam, psi=0.0, n_atoms=0),
        spots=SpotCoeffs.build(m, 1, a=a, b=b, n_atoms=0),
        short_rate=ShortRateSpec.build(r),
        initial=initial if initial is not None else _default_initial(m, r),
    )


def vasicek_jump_model(
    m: int = 1,
    c: Sequence[float] = (0.008, 0.01),
    delta: Sequence[float] = (-1.2, -1.0),
    lam: float = 0.0,
    r: float = 0.02,
    atoms: Sequence[float] = (1.0,),
    weights: Sequence[float] = (0.4,),
    gamma_scale: Sequence[float] = (0.004, 0.005),
    gamma_delta: Optional[Sequence[float]] = None,
    c_spot: float = 0.05,
    psi: float = 0.0,
    lambda_bound: float = 1.5,
    initial: Optional[InitialCurveSpec] = None,
    a=None,
) -> ModelSpec:
    """Vasicek diffusive part plus a compound-Poisson jump part (atomic marks).

    gamma^i(x_k) = gamma_scale[i] * exp(gamma_delta[i] xi) for every atom;
    risky spots jump by c_spot (index 0 never jumps).
    """
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    k = atoms.size
    gamma_delta = delta if gamma_delta is None else gamma_delta
    g = np.tile(np.asarray(gamma_scale, dtype=float)[:, None], (1, k))
    c_mat = np.zeros((m + 1, k))
    c_mat[1:, :] = c_spot
    kappa = np.full(k, max(1.0, (1.0 + abs(psi)) * (1.0 + abs(c_spot)) / lambda_bound * 1.1))
    return ModelSpec(
        m=m,
        d=1,
        vol=VolSpec.vasicek(c, delta),
        market_price=MarketPriceSpec.build(
            d=1, lam=lam, psi=psi, lambda_bound=lambda_bound, kappa=kappa, n_atoms=k
        ),
        spots=SpotCoeffs.build(m, 1, a=a, b=None, c=c_mat, n_atoms=k),
        short_rate=ShortRateSpec.build(r),
        initial=initial if initial is not None else _default_initial(m, r),
        jumps=JumpMeasureSpec(atoms, weights),
        jump_vol=JumpVolSpec.exp_atoms(g, np.asarray(gamma_delta, dtype=float)),
    )


def ordered_cone_model(
    m: int = 3,
    c_riskless: float = 0.006,
    c_risky: float = 0.01,
    delta_riskless: float = -1.2,
    delta_risky: float = -1.0,
    lam: float = 0.0,
    r: float = 0.02,
    spread: float = 0.01,
    with_jumps: bool = False,
    jump_intensity: float = 0.5,
    gamma_scale_risky: float = 0.004,
    c_spot: float = 0.02,
) -> ModelSpec:
    """Cone-compatible family: identical coefficients across risky indices.

    Risky volatilities (and jump curves, if enabled) coincide across i, so
    the touching-point conditions hold identically and the ordered cone is
    preserved; initial risky curves are stacked by `spread` in decreasing i.
    """
    c = np.array([c_riskless] + [c_risky] * m)
    delta = np.array([delta_riskless] + [delta_risky] * m)
    levels = [r] + [r + spread * (m - i + 1) for i in range(1, m + 1)]
    initial = InitialCurveSpec.flat(levels)
    if not with_jumps:
        return vasicek_model(m=m, c=c, delta=delta, lam=lam, r=r, initial=initial)
    return vasicek_jump_model(
        m=m,
        c=c,
        delta=delta,
        lam=lam,
        r=r,
        atoms=(1.0,),
        weights=(jump_intensity,),
        gamma_scale=[gamma_scale_risky] * (m + 1),
        c_spot=c_spot,
        initial=initial,
    )


def deterministic_spread_model(
    m: int = 2,
    a_risky: Sequence[float] = (-0.02, -0.01),
    r: float = 0.02,
    spread: float = 0.01,
) -> ModelSpec:
    """Deterministic-spread model: zero volatilities, explicit spot drifts.

    Matches the closed-form ordered example: with a^i <= a^j and ordered
    initial spots the risky term structures stay ordered pathwise.
    """
    levels = [r] + [r + spread * (m - i + 1) for i in range(1, m + 1)]
    return vasicek_model(
        m=m,
        c=np.zeros(m + 1),
        delta=np.full(m + 1, -1.0),
        r=r,
        initial=InitialCurveSpec.flat(levels),
        a=[None] + list(a_risky),
    )
