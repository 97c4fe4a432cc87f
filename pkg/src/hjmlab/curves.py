"""Numerics of exponentially weighted forward-curve spaces.

A curve h on the maturity half-line is stored as its value at zero plus
samples of its derivative h' on a uniform grid.  That representation makes
the weighted norm

    ||h||_rho = ( h(0)^2 + int_0^inf h'(s)^2 e^{rho s} ds )^{1/2}

exact up to quadrature, and the cumulative integral operator trivial.  All
integrals in maturity use the composite trapezoid rule on the grid; the
derivative is zero-extended past the horizon, so curves are constant beyond
their last node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Curve",
    "CurveFamily",
    "SpaceParams",
    "GridError",
    "InvalidCurveError",
    "norm",
    "eval_curve",
    "integral_op",
    "product",
    "shift",
    "scale",
    "add",
    "constants",
    "big_v",
    "big_w",
    "v_w_functions",
    "cumtrapz",
    "trapz",
    "exp_curve",
    "constant_curve",
]


class GridError(ValueError):
    """Two curves do not share the same maturity grid."""


class InvalidCurveError(ValueError):
    """Curve data contains non-finite samples or a bad grid."""


_trapezoid = getattr(np, "trapezoid", np.trapz)


def cumtrapz(y: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative trapezoid integral of node samples, starting at 0."""
    out = np.empty_like(y)
    out[..., 0] = 0.0
    np.cumsum(0.5 * dx * (y[..., 1:] + y[..., :-1]), axis=-1, out=out[..., 1:])
    return out


def trapz(y: np.ndarray, dx: float) -> float:
    """Composite trapezoid integral over the whole grid."""
    return float(_trapezoid(y, dx=dx))


@dataclass(frozen=True)
class Curve:
    """Absolutely continuous curve on [0, horizon], constant past horizon.

    Attributes
    ----------
    h0 : value at maturity zero.
    deriv : samples of h' at the grid nodes 0, dx, 2 dx, ...
    grid_step : maturity spacing dx > 0.
    """

    h0: float
    deriv: np.ndarray
    grid_step: float

    def __post_init__(self):
        d = np.asarray(self.deriv, dtype=float)
        object.__setattr__(self, "deriv", d)
        if self.grid_step <= 0.0:
            raise InvalidCurveError(f"grid_step must be > 0, got {self.grid_step}")
        if d.ndim != 1 or d.size < 1:
            raise InvalidCurveError("deriv must be a 1-d array with >= 1 sample")
        if not (np.isfinite(self.h0) and np.all(np.isfinite(d))):
            raise InvalidCurveError("curve has non-finite samples")

    @property
    def horizon(self) -> float:
        return self.grid_step * (self.deriv.size - 1)

    @property
    def n_nodes(self) -> int:
        return self.deriv.size

    def values(self) -> np.ndarray:
        """Curve values at the grid nodes, h(xi_k) = h0 + int_0^{xi_k} h'."""
        return self.h0 + cumtrapz(self.deriv, self.grid_step)

    def grid(self) -> np.ndarray:
        return self.grid_step * np.arange(self.deriv.size)

    def same_grid(self, other: "Curve") -> bool:
        return (
            self.deriv.size == other.deriv.size
            and self.grid_step == other.grid_step
        )


def constant_curve(value: float, grid_step: float, n_nodes: int) -> Curve:
    return Curve(value, np.zeros(n_nodes), grid_step)


def exp_curve(scale_: float, rate: float, grid_step: float, n_nodes: int) -> Curve:
    """Curve  xi -> scale * exp(rate * xi), derivative sampled analytically."""
    xi = grid_step * np.arange(n_nodes)
    return Curve(scale_, scale_ * rate * np.exp(rate * xi), grid_step)


def eval_curve(c: Curve, xi: float) -> float:
    """Point evaluation h(xi); exact integral of the piecewise-linear h'."""
    if xi < 0.0:
        raise ValueError(f"maturity must be >= 0, got {xi}")
    dx = c.grid_step
    vals = c.values()
    if xi >= c.horizon:
        # zero-extended derivative: constant past the horizon
        return float(vals[-1])
    k = int(xi // dx)
    frac = xi - k * dx
    if frac == 0.0:
        return float(vals[k])
    # integral over the partial interval of the linear interpolant of h'
    d0 = c.deriv[k]
    d1 = c.deriv[k + 1]
    dfrac = d0 + (d1 - d0) * frac / dx
    return float(vals[k] + 0.5 * frac * (d0 + dfrac))


def norm(c: Curve, rho: float) -> float:
    """Weighted norm ( h(0)^2 + int h'(s)^2 e^{rho s} ds )^{1/2}."""
    if rho <= 0.0:
        raise ValueError(f"rho must be > 0, got {rho}")
    xi = c.grid()
    w = c.deriv * c.deriv * np.exp(rho * xi)
    if not np.all(np.isfinite(w)):
        raise InvalidCurveError("weighted derivative overflows; reduce rho or horizon")
    tail = trapz(w, c.grid_step)
    return math.sqrt(c.h0 * c.h0 + tail)


def integral_op(c: Curve) -> Curve:
    """Cumulative integral  (Ih)(xi) = int_0^xi h;  (Ih)(0)=0, (Ih)' = h."""
    return Curve(0.0, c.values(), c.grid_step)


def product(a: Curve, b: Curve) -> Curve:
    """Pointwise product with the product rule on the grid."""
    if not a.same_grid(b):
        raise GridError("product requires identical grids")
    av = a.values()
    bv = b.values()
    return Curve(a.h0 * b.h0, a.deriv * bv + av * b.deriv, a.grid_step)


def scale(c: Curve, k: float) -> Curve:
    return Curve(k * c.h0, k * c.deriv, c.grid_step)


def add(a: Curve, b: Curve) -> Curve:
    if not a.same_grid(b):
        raise GridError("add requires identical grids")
    return Curve(a.h0 + b.h0, a.deriv + b.deriv, a.grid_step)


def shift(c: Curve, t: float) -> Curve:
    """Translation (S_t h)(xi) = h(t + xi).

    Grid-aligned t is an exact index shift of the derivative; otherwise the
    derivative is linearly interpolated.  Simulation code keeps dt equal to
    the grid step so its shifts stay exact.
    """
    if t < 0.0:
        raise ValueError(f"shift requires t >= 0, got {t}")
    if t == 0.0:
        return c
    dx = c.grid_step
    n = c.deriv.size
    steps = t / dx
    k = int(round(steps))
    new_h0 = eval_curve(c, t)
    new_deriv = np.zeros(n)
    if abs(steps - k) < 1e-9:
        if k < n:
            new_deriv[: n - k] = c.deriv[k:]
    else:
        xi_new = t + dx * np.arange(n)
        inside = xi_new <= c.horizon
        new_deriv[inside] = np.interp(xi_new[inside], c.grid(), c.deriv)
    return Curve(new_h0, new_deriv, dx)


@dataclass(frozen=True)
class CurveFamily:
    """m+1 curves on one shared grid; index 0 is the riskless curve."""

    curves: tuple[Curve, ...]

    def __post_init__(self):
        cs = tuple(self.curves)
        object.__setattr__(self, "curves", cs)
        if len(cs) < 1:
            raise InvalidCurveError("family needs at least the riskless curve")
        first = cs[0]
        for c in cs[1:]:
            if not first.same_grid(c):
                raise GridError("family members must share one grid")

    @property
    def m(self) -> int:
        return len(self.curves) - 1

    @property
    def grid_step(self) -> float:
        return self.curves[0].grid_step

    @property
    def n_nodes(self) -> int:
        return self.curves[0].n_nodes

    def __getitem__(self, i: int) -> Curve:
        return self.curves[i]

    def __len__(self) -> int:
        return len(self.curves)

    def short_ends(self) -> np.ndarray:
        return np.array([c.h0 for c in self.curves])

    def norm(self, rho: float) -> float:
        return math.sqrt(sum(norm(c, rho) ** 2 for c in self.curves))


@dataclass(frozen=True)
class SpaceParams:
    """Weight exponents 0 < rho < rho_prime of the nested curve spaces."""

    rho: float
    rho_prime: float

    def __post_init__(self):
        if not (0.0 < self.rho < self.rho_prime):
            raise ValueError(
                f"need 0 < rho < rho_prime, got ({self.rho}, {self.rho_prime})"
            )


def constants(p: SpaceParams) -> tuple[float, float, float]:
    """Embedding and integral-operator constants (c_rho, c_rho_rhop, k_rho_rhop).

    c_rho = 1 + 1/sqrt(rho) bounds point evaluation by the norm;
    c_rho_rhop = sqrt(1/(rho'(rho'-rho))) bounds the integral operator
    between the two spaces; k is their product.
    """
    c_rho = 1.0 + 1.0 / math.sqrt(p.rho)
    c_rr = math.sqrt(1.0 / (p.rho_prime * (p.rho_prime - p.rho)))
    return c_rho, c_rr, c_rho * c_rr


def big_v(k: float, r) -> float:
    """V_K(r) = r (1 + r) exp(K r), strictly increasing from 0."""
    return r * (1.0 + r) * np.exp(k * r)


def big_w(k: float, r: float) -> float:
    """Inverse of V_K by bisection (compared in log space to avoid overflow)."""
    if k <= 0.0:
        raise ValueError(f"K must be > 0, got {k}")
    if r < 0.0:
        raise ValueError(f"W_K is defined on r >= 0, got {r}")
    if r == 0.0:
        return 0.0
    log_r = math.log(r)

    def log_v(x: float) -> float:
        return math.log(x) + math.log1p(x) + k * x

    lo, hi = 0.0, max(1.0, r)
    while log_v(hi) < log_r:  # geometric bracket expansion
        lo, hi = hi, 2.0 * hi
    # bisect to (near) machine precision; the stated 1e-12 tolerance is
    # guaranteed long before the bracket stops shrinking
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if log_v(mid) < log_r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def v_w_functions(k: float, r: float) -> tuple[float, float, float]:
    """Return (V_K(r), W_K(r), w_K(r)) with w_K(r) = min(W_K(r), r)."""
    if k <= 0.0:
        raise ValueError(f"K must be > 0, got {k}")
    if r < 0.0:
        raise ValueError(f"r must be >= 0, got {r}")
    if r == 0.0:
        return 0.0, 0.0, 0.0
    v = float(big_v(k, r))
    w_inv = big_w(k, r)
    return v, w_inv, min(w_inv, r)
