"""Ordered-cone checks: membership, coefficient conditions, MC verification.

The cone orders the risky curves pointwise (index 1 on top, the riskless
curve is not part of the ordering).  Sufficient conditions for the dynamics
to preserve the cone are checked at constructed touching configurations,
where two risky components are pinned together at one maturity: there the
diffusive loadings must agree, with one-sided dominance at shorter
maturities whose direction follows the sign at the touching point, and
jumps must map the cone into itself.  Randomized curves never touch, so the
checker builds the touchings explicitly; the certificate is sampled, not a
proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .curves import Curve, CurveFamily
from .modelspec import Grid, ModelSpec, check_order_condition

__all__ = [
    "ConeReport",
    "cone_membership",
    "check_cone_coeff_conditions",
    "monotonicity_report",
]


@dataclass(frozen=True)
class ConeReport:
    member: bool
    vacuous: bool
    worst_violation: Optional[tuple]  # (i, j, xi, gap) with gap > 0 when violated
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "member": self.member,
            "vacuous": self.vacuous,
            "worst_violation": self.worst_violation,
            "note": self.note,
        }


def cone_membership(f: CurveFamily, tol: float = 1e-12) -> ConeReport:
    """Check the pointwise ordering of the risky components on the grid."""
    if f.m < 2:
        return ConeReport(True, True, None, "fewer than two risky curves")
    vals = np.stack([c.values() for c in f.curves[1:]])
    gaps = vals[1:] - vals[:-1]  # should be <= 0
    worst_ix = np.unravel_index(np.argmax(gaps), gaps.shape)
    worst = float(gaps[worst_ix])
    if worst <= tol:
        return ConeReport(True, False, None)
    i = int(worst_ix[0]) + 1
    xi = float(worst_ix[1] * f.grid_step)
    return ConeReport(False, False, (i, i + 1, xi, worst))


def _curve_from_values(v: np.ndarray, dx: float) -> Curve:
    """Curve whose grid-quadrature values reproduce v to rounding.

    The derivative solves the trapezoid recurrence d_{k+1} = 2 dv/dx - d_k;
    the parasitic oscillation in d is harmless because the cone checks read
    values only.
    """
    d = np.empty_like(v)
    d[0] = (v[1] - v[0]) / dx if v.size > 1 else 0.0
    diffs = np.diff(v)
    for k in range(v.size - 1):
        d[k + 1] = 2.0 * diffs[k] / dx - d[k]
    return Curve(float(v[0]), d, dx)


def _ordered_random_family(rng, spec: ModelSpec, grid: Grid) -> CurveFamily:
    """Random family in the cone: risky curves stacked by nonnegative gaps."""
    xi = grid.xi()
    n = grid.n_nodes

    def rand_values():
        v = np.full(n, rng.uniform(-0.5, 0.5))
        for _ in range(3):
            a = rng.uniform(-0.3, 0.3)
            b = rng.uniform(0.8, 2.0)
            w = rng.uniform(0.0, 2.0)
            v = v + a * np.exp(-b * xi) * np.cos(w * xi)
        return v

    riskless = rand_values()
    vals = [rand_values()]
    for _ in range(spec.m - 1):
        a = rng.uniform(0.0, 0.3)
        b = rng.uniform(0.5, 2.0)
        vals.append(vals[-1] + a * np.exp(-b * xi))
    curves = [_curve_from_values(riskless, grid.dt)]
    for v in reversed(vals):  # index 1 carries the largest curve
        curves.append(_curve_from_values(v, grid.dt))
    return CurveFamily(tuple(curves))


def _touching_family(rng, spec: ModelSpec, grid: Grid, i: int, j: int, node: int):
    """Family in the cone with components i and j equal at one grid node."""
    fam = _ordered_random_family(rng, spec, grid)
    xi = grid.xi()
    xi_star = xi[node]
    vi = fam[i].values()
    vj = fam[j].values()
    # close the gap with a factor vanishing at xi_star
    gap = vi - vj
    bump = 1.0 - np.exp(-2.0 * (xi - xi_star) ** 2)
    new_vj = vi - gap * bump
    curves = list(fam.curves)
    mid = {}
    for k in range(i + 1, j):
        mid[k] = np.minimum(vi, np.maximum(fam[k].values(), new_vj))
    for k, v in [(j, new_vj)] + list(mid.items()):
        curves[k] = _curve_from_values(v, grid.dt)
    return CurveFamily(tuple(curves))


def _beta_values(spec: ModelSpec, fam: CurveFamily):
    betas = spec.vol.beta_curves(fam)
    return [
        [betas[i][j].values() for j in range(spec.d)] for i in range(len(fam))
    ]


def _gamma_values(spec: ModelSpec, fam: CurveFamily):
    out = []
    for k, x in enumerate(spec.jumps.atoms):
        gs = spec.jump_vol.gamma_curves(fam, k, float(x))
        out.append([g.values() for g in gs])
    return out  # [atom][index] -> values


def check_cone_coeff_conditions(
    spec: ModelSpec,
    grid: Grid,
    samples: int = 24,
    seed: int = 0,
    tol: float = 1e-10,
) -> dict:
    """Sampled certificate of the cone-preservation coefficient conditions.

    For constructed touching pairs: diffusive loadings must coincide at the
    touching maturity and dominate one-sidedly before it; jump loadings the
    same; and every jump must keep sampled cone members inside the cone.
    Returns a counterexample payload when a condition fails.
    """
    rng = np.random.default_rng(seed)
    report = {
        "passed": True,
        "vacuous": spec.m < 2,
        "samples": samples,
        "seed": seed,
        "counterexample": None,
        "conditions": {
            "beta_touching_equality": "PASS",
            "beta_one_sided_dominance": "PASS",
            "gamma_touching_equality": "PASS" if spec.has_jumps else "VACUOUS",
            "gamma_one_sided_dominance": "PASS" if spec.has_jumps else "VACUOUS",
            "jump_stays_in_cone": "PASS" if spec.has_jumps else "VACUOUS",
        },
    }
    if spec.m < 2:
        return report

    def fail(cond, i, j, node, lhs, rhs, fam):
        report["passed"] = False
        report["conditions"][cond] = "FAIL"
        if report["counterexample"] is None:
            report["counterexample"] = {
                "condition": cond,
                "i": i,
                "j": j,
                "xi_star": node * grid.dt,
                "lhs": float(lhs),
                "rhs": float(rhs),
                "family_values": [c.values().tolist() for c in fam.curves],
            }

    scale = 1.0 + max(
        float(np.max(np.abs(spec.vol.c))) if spec.vol.kind == "vasicek_exp" else 1.0,
        1.0,
    )
    for _ in range(samples):
        i = int(rng.integers(1, spec.m))
        j = int(rng.integers(i + 1, spec.m + 1))
        node = int(rng.integers(0, grid.n_nodes))
        fam = _touching_family(rng, spec, grid, i, j, node)

        beta = _beta_values(spec, fam)
        for kf in range(spec.d):
            bi, bj = beta[i][kf], beta[j][kf]
            if abs(bi[node] - bj[node]) > tol * scale:
                fail("beta_touching_equality", i, j, node, bi[node], bj[node], fam)
                continue
            if bi[node] > tol * scale:
                if np.any(bi[:node] < bj[:node] - tol * scale):
                    fail("beta_one_sided_dominance", i, j, node, bi[:node].min(), 0, fam)
            elif bi[node] < -tol * scale:
                if np.any(bi[:node] > bj[:node] + tol * scale):
                    fail("beta_one_sided_dominance", i, j, node, bi[:node].max(), 0, fam)

        if spec.has_jumps:
            gvals = _gamma_values(spec, fam)
            fam_vals = np.stack([c.values() for c in fam.curves])
            for ka in range(spec.n_atoms):
                gi, gj = gvals[ka][i], gvals[ka][j]
                if abs(gi[node] - gj[node]) > tol * scale:
                    fail("gamma_touching_equality", i, j, node, gi[node], gj[node], fam)
                    continue
                if gi[node] > tol * scale and np.any(gi[:node] < gj[:node] - tol * scale):
                    fail("gamma_one_sided_dominance", i, j, node, gi[:node].min(), 0, fam)
                elif gi[node] < -tol * scale and np.any(gi[:node] > gj[:node] + tol * scale):
                    fail("gamma_one_sided_dominance", i, j, node, gi[:node].max(), 0, fam)
                jumped = fam_vals + np.stack(gvals[ka])
                risky = jumped[1:]
                worst = float(np.max(risky[1:] - risky[:-1]))
                if worst > tol * scale:
                    fail("jump_stays_in_cone", i, j, node, worst, 0.0, fam)
    return report


def monotonicity_report(ens, spec: ModelSpec, tol: Optional[float] = None) -> dict:
    """Summarize cone and price-ordering violations tracked by a simulation.

    Requires an ensemble simulated with invariance tracking.  Also restates
    the preconditions: the drift-ordering condition, ordered initial spots,
    and an initial family inside the cone.
    """
    diag = ens.diagnostics
    if not diag.get("invariance_tracked", False):
        raise ValueError(
            "ensemble was simulated without invariance tracking; "
            "set track_invariance on the plan"
        )
    order = check_order_condition(spec, ens.grid)
    spots0 = ens.initial_spots[1:]
    spots_ordered = bool(np.all(np.diff(spots0) >= 0.0))
    fam0 = spec.initial.family(ens.grid.dt, ens.grid.n_nodes)
    cone0 = cone_membership(fam0)
    return {
        "passed": (
            order.passed
            and spots_ordered
            and cone0.member
            and diag["cone_violations"] == 0
            and diag["order_violations"] == 0
        ),
        "preconditions": {
            "order_condition": order.as_dict(),
            "initial_spots_ordered": spots_ordered,
            "initial_family_in_cone": cone0.as_dict(),
        },
        "cone_violations": int(diag["cone_violations"]),
        "order_violations": int(diag["order_violations"]),
        "worst_cone_gap": float(diag["worst_cone_gap"]),
        "worst_order_gap": float(diag["worst_order_gap"]),
        "implication_breaks": int(diag["implication_breaks"]),
        "n_paths": ens.n_paths,
    }
