"""Affine short-end realization vs the full curve dynamics."""

import math

import numpy as np
import pytest

from hjmlab.affine import (
    AffineSpec,
    kappa,
    ou_moments,
    phi_curve,
    realization_gap,
    realize_step,
    reconstruct,
)
from hjmlab.curves import eval_curve
from hjmlab.modelspec import Grid, InitialCurveSpec
from hjmlab.presets import vasicek_model
from hjmlab.solver import SimulationPlan, simulate

GRID = Grid(dt=0.01, horizon_t=0.5, horizon_xi=2.0)


def make_affine(spec, grid=GRID):
    return AffineSpec.from_model(spec, grid)


class TestPhiCurve:
    def test_initial_time_reproduces_h0_with_state(self):
        spec = vasicek_model(
            m=1, initial=InitialCurveSpec.exp_decay([0.02, 0.03], [0.01, 0.005], [-0.7, -0.9])
        )
        a = make_affine(spec)
        fam = reconstruct(a.h0.short_ends(), a, 0.0)
        for i in range(2):
            np.testing.assert_allclose(
                fam[i].values(), a.h0[i].values(), atol=1e-12
            )

    def test_constant_h0_zero_vol(self):
        spec = vasicek_model(
            m=0, c=[0.0], delta=[-1.0], initial=InitialCurveSpec.flat([0.04])
        )
        a = make_affine(spec)
        phi = phi_curve(a, 0, 0.2)
        xi = phi.grid()
        # values reconstruct through the grid quadrature: O(dx^2) accuracy
        np.testing.assert_allclose(
            phi.values(), 0.04 - 0.04 * np.exp(-xi), atol=1e-6
        )

    def test_short_end_pinned_to_zero(self):
        spec = vasicek_model(m=1)
        a = make_affine(spec)
        for t in (0.0, 0.1, 0.3):
            for i in range(2):
                assert phi_curve(a, i, t).h0 == pytest.approx(0.0, abs=1e-14)

    def test_beyond_horizon_rejected(self):
        spec = vasicek_model(m=0, c=[0.01], delta=[-1.0])
        a = make_affine(spec)
        with pytest.raises(ValueError):
            phi_curve(a, 0, 1.0, n_nodes=GRID.n_nodes)


class TestKappa:
    def test_constant_curve_no_vol(self):
        spec = vasicek_model(
            m=0, c=[0.0], delta=[-1.3], initial=InitialCurveSpec.flat([0.05])
        )
        a = make_affine(spec)
        assert kappa(a, 0, 0.2) == pytest.approx(1.3 * 0.05, abs=1e-12)

    def test_time_zero_kills_vol_term(self):
        spec = vasicek_model(m=0, c=[0.5], delta=[-1.0], initial=InitialCurveSpec.flat([0.03]))
        a = make_affine(spec)
        assert kappa(a, 0, 0.0) == pytest.approx(0.03, abs=1e-10)

    def test_eigencurve_gives_zero(self):
        # h0 = k e^{delta xi} makes dh/dt - delta h vanish identically
        spec = vasicek_model(
            m=0,
            c=[0.0],
            delta=[-1.0],
            initial=InitialCurveSpec.exp_decay([0.0], [0.04], [-1.0]),
        )
        a = make_affine(spec)
        assert kappa(a, 0, 0.2) == pytest.approx(0.0, abs=1e-5)


class TestRealizeStep:
    def test_fixed_point_of_constant_curve(self):
        spec = vasicek_model(
            m=0, c=[0.0], delta=[-1.0], initial=InitialCurveSpec.flat([0.05])
        )
        a = make_affine(spec)
        z = realize_step(np.array([0.05]), a, 0.1, 0.01, 0.0)
        assert z[0] == pytest.approx(0.05, abs=1e-10)

    def test_identity_at_zero_step(self):
        spec = vasicek_model(m=1)
        a = make_affine(spec)
        z0 = a.h0.short_ends()
        np.testing.assert_allclose(realize_step(z0, a, 0.0, 0.0, 0.0), z0)

    def test_market_price_shifts_drift_linearly(self):
        spec = vasicek_model(m=0, c=[0.01], delta=[-1.0])
        a0 = make_affine(spec)
        a1 = AffineSpec(a0.c, a0.delta, a0.h0, lam=0.4, b=a0.b)
        z = np.array([0.02])
        base = realize_step(z, a0, 0.1, 0.01, 0.0)
        priced = realize_step(z, a1, 0.1, 0.01, 0.0)
        assert priced[0] - base[0] == pytest.approx(-0.01 * 0.4 * 0.01)


class TestReconstruct:
    def test_zero_state_gives_phi(self):
        spec = vasicek_model(m=1)
        a = make_affine(spec)
        fam = reconstruct(np.zeros(2), a, 0.1)
        for i in range(2):
            np.testing.assert_allclose(
                fam[i].values(), phi_curve(a, i, 0.1).values(), atol=1e-14
            )

    def test_short_end_equals_state(self):
        spec = vasicek_model(m=1)
        a = make_affine(spec)
        z = np.array([0.023, 0.047])
        fam = reconstruct(z, a, 0.2)
        np.testing.assert_allclose(fam.short_ends(), z, atol=1e-14)


class TestRealizationGap:
    def test_zero_vol_transport_matches(self):
        spec = vasicek_model(
            m=1,
            c=[0.0, 0.0],
            delta=[-1.2, -1.0],
            initial=InitialCurveSpec.exp_decay([0.02, 0.03], [0.01, 0.01], [-1.0, -0.8]),
        )
        plan = SimulationPlan(grid=GRID, n_paths=2, seed=1, obs_stride=10)
        out = realization_gap(plan, spec)
        # both sides are deterministic transport; what remains is the Euler
        # step of the state and the finite-difference forcing, both O(dt)
        assert out["gap"] <= 5e-5

    def test_gap_halves_with_dt(self):
        spec = vasicek_model(m=1, lam=0.2)
        gaps = {}
        for dt in (0.02, 0.01, 0.005):
            grid = Grid(dt=dt, horizon_t=0.5, horizon_xi=2.0)
            plan = SimulationPlan(grid=grid, n_paths=20, seed=5, obs_stride=5)
            gaps[dt] = realization_gap(plan, spec)["gap"]
        slope = np.polyfit(
            np.log(list(gaps.keys())), np.log(list(gaps.values())), 1
        )[0]
        assert 0.8 <= slope <= 1.2, gaps

    def test_ou_moments_match_monte_carlo(self):
        # eigencurve start, no market price: exact OU short end
        spec = vasicek_model(
            m=0,
            c=[0.01],
            delta=[-1.0],
            initial=InitialCurveSpec.exp_decay([0.0], [0.03], [-1.0]),
            r=0.03,
        )
        grid = Grid(dt=0.005, horizon_t=1.0, horizon_xi=3.0)
        plan = SimulationPlan(grid=grid, n_paths=20000, seed=9, obs_stride=grid.n_steps)
        ens = simulate(plan, spec)
        z_t = ens.short_ends[:, -1, 0]
        mean, var = ou_moments(0.03, -1.0, 0.01, 0.0, 1.0)
        se_mean = z_t.std(ddof=1) / math.sqrt(plan.n_paths)
        assert abs(z_t.mean() - mean) <= 3 * se_mean + 5e-5  # O(dt) scheme bias
        rel_var_se = math.sqrt(2.0 / (plan.n_paths - 1))
        assert abs(z_t.var(ddof=1) - var) <= (3 * rel_var_se + 0.05) * var
