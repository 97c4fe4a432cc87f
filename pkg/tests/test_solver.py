"""Mild Euler solver: transport exactness, jumps, engines, determinism."""

import math

import numpy as np
import pytest

from hjmlab.curves import Curve, CurveFamily, constant_curve, eval_curve, shift
from hjmlab.modelspec import Grid, InitialCurveSpec
from hjmlab.presets import vasicek_jump_model, vasicek_model
from hjmlab.solver import (
    PathState,
    SchemeViolationError,
    SimulationPlan,
    StepInputs,
    bond_price,
    euler_step,
    simulate,
)

GRID = Grid(dt=0.01, horizon_t=0.5, horizon_xi=2.0)


def flat_state(spec, grid=GRID, level=None):
    fam = spec.initial.family(grid.dt, grid.n_nodes)
    return PathState(0.0, fam, np.ones(spec.m + 1))


class TestBondPrice:
    def test_flat_curve(self):
        c = constant_curve(0.05, 0.01, 301)
        assert bond_price(c, 2.0) == pytest.approx(math.exp(-0.1))

    def test_terminal_condition(self):
        c = constant_curve(0.07, 0.01, 301)
        assert bond_price(c, 0.0) == 1.0

    def test_ramp_curve(self):
        c = Curve(0.0, np.full(3001, 0.01), 0.001)
        assert bond_price(c, 3.0) == pytest.approx(math.exp(-0.045), rel=1e-9)

    def test_beyond_horizon_rejected(self):
        with pytest.raises(ValueError):
            bond_price(constant_curve(0.05, 0.01, 11), 1.0)


class TestEulerStep:
    def test_zero_coefficients_flat_curve(self):
        spec = vasicek_model(
            m=1,
            c=[0.0, 0.0],
            delta=[-1.0, -1.0],
            initial=InitialCurveSpec.flat([0.05, 0.05]),
        )
        s0 = flat_state(spec)
        s1 = euler_step(s0, GRID.dt, StepInputs(np.zeros(1)), spec, drift="zero")
        for i in range(2):
            np.testing.assert_allclose(s1.family[i].values(), 0.05, atol=1e-15)
        np.testing.assert_allclose(s1.spots, s0.spots, atol=1e-15)

    def test_pure_transport_of_ramp(self):
        spec = vasicek_model(m=0, c=[0.0], delta=[-1.0])
        fam = CurveFamily((Curve(0.0, np.ones(GRID.n_nodes), GRID.dt),))
        state = PathState(0.0, fam, np.ones(1))
        out = euler_step(state, GRID.dt, StepInputs(np.zeros(1)), spec, drift="zero")
        xi = out.family[0].grid()[:-1]
        np.testing.assert_allclose(
            out.family[0].values()[:-1], GRID.dt + xi, atol=1e-14
        )

    def test_absorbing_jump(self):
        spec = vasicek_jump_model(c_spot=-1.0, gamma_scale=(0.0, 0.0))
        state = flat_state(spec)
        out = euler_step(
            state,
            GRID.dt,
            StepInputs(np.zeros(1), np.array([1])),
            spec,
        )
        assert out.spots[1] == 0.0
        out2 = euler_step(
            out, GRID.dt, StepInputs(np.zeros(1), np.array([0])), spec
        )
        assert out2.spots[1] == 0.0  # absorbing

    def test_scheme_violation_raises(self):
        spec = vasicek_model(m=1, b_risky=50.0)
        state = flat_state(spec)
        with pytest.raises(SchemeViolationError):
            euler_step(state, GRID.dt, StepInputs(np.array([-1.0])), spec)

    def test_dt_must_match_grid(self):
        spec = vasicek_model()
        with pytest.raises(ValueError):
            euler_step(flat_state(spec), 0.02, StepInputs(np.zeros(1)), spec)


class TestTransportExactness:
    def test_noiseless_zero_drift_is_exact_shift(self):
        spec = vasicek_model(
            m=1, initial=InitialCurveSpec.exp_decay([0.02, 0.03], [0.01, 0.01], [-1.0, -0.5])
        )
        plan = SimulationPlan(
            grid=GRID,
            n_paths=1,
            seed=1,
            drift="zero",
            zero_noise=True,
            snapshots=True,
            obs_stride=10,
            engine="state",
        )
        ens = simulate(plan, spec)
        fam0 = spec.initial.family(GRID.dt, GRID.n_nodes)
        for pos, t in enumerate(ens.obs_times):
            for i in range(2):
                expect = shift(fam0[i], float(t))
                got = ens.curve_values[0, pos, i]
                np.testing.assert_allclose(got, expect.values(), atol=1e-13)


class TestSimulate:
    def test_constant_trajectory_for_zero_coefficients(self):
        spec = vasicek_model(
            m=1,
            c=[0.0, 0.0],
            delta=[-1.0, -1.0],
            initial=InitialCurveSpec.flat([0.0, 0.0]),
            r=0.0,
        )
        plan = SimulationPlan(
            grid=GRID, n_paths=3, seed=5, obs_stride=10, engine="state", drift="zero"
        )
        ens = simulate(plan, spec)
        np.testing.assert_allclose(ens.spots, 1.0, atol=1e-14)
        np.testing.assert_allclose(ens.short_ends, 0.0, atol=1e-14)
        np.testing.assert_allclose(ens.numeraire, 1.0, atol=1e-14)

    def test_determinism_bitwise(self):
        spec = vasicek_jump_model()
        plan = SimulationPlan(
            grid=GRID, n_paths=7, seed=123, maturities=(1.0,), obs_stride=25
        )
        a = simulate(plan, spec)
        b = simulate(plan, spec)
        np.testing.assert_array_equal(a.spots, b.spots)
        np.testing.assert_array_equal(a.bond_integrals, b.bond_integrals)
        np.testing.assert_array_equal(a.deflator, b.deflator)

    def test_chunking_does_not_change_results(self):
        spec = vasicek_model()
        base = SimulationPlan(
            grid=GRID, n_paths=9, seed=3, maturities=(1.0,), engine="state"
        )
        small = SimulationPlan(
            grid=GRID,
            n_paths=9,
            seed=3,
            maturities=(1.0,),
            engine="state",
            chunk_size=2,
        )
        a = simulate(base, spec)
        b = simulate(small, spec)
        np.testing.assert_array_equal(a.spots, b.spots)
        np.testing.assert_array_equal(a.short_ends, b.short_ends)

    def test_batch_matches_single_path_reference(self):
        spec = vasicek_jump_model(lam=0.2, psi=0.1, c_spot=0.05)
        grid = Grid(dt=0.01, horizon_t=0.05, horizon_xi=1.0)
        plan = SimulationPlan(
            grid=grid, n_paths=3, seed=17, maturities=(0.5,), engine="state"
        )
        ens = simulate(plan, spec)
        fam0 = spec.initial.family(grid.dt, grid.n_nodes)
        from hjmlab.solver import _draw_noise

        for path in range(3):
            dW, counts = _draw_noise(spec, plan, path)
            state = PathState(0.0, fam0, np.ones(spec.m + 1))
            for k in range(grid.n_steps):
                state = euler_step(
                    state, grid.dt, StepInputs(dW[k], counts[k]), spec
                )
            np.testing.assert_allclose(state.spots, ens.spots[path, -1], rtol=1e-12)
            np.testing.assert_allclose(
                state.family.short_ends(), ens.short_ends[path, -1], rtol=1e-11, atol=1e-14
            )
            np.testing.assert_allclose(state.deflator, ens.deflator[path, -1], rtol=1e-12)
            np.testing.assert_allclose(state.numeraire, ens.numeraire[path, -1], rtol=1e-12)

    def test_superposition_matches_state_engine(self):
        spec = vasicek_model(m=1, lam=0.15, c=[0.008, 0.01], delta=[-1.2, -1.0])
        grid = Grid(dt=0.01, horizon_t=0.5, horizon_xi=2.0)
        kw = dict(grid=grid, n_paths=8, seed=9, maturities=(1.0, 1.5), obs_stride=10)
        a = simulate(SimulationPlan(engine="state", **kw), spec)
        b = simulate(SimulationPlan(engine="superposition", **kw), spec)
        np.testing.assert_allclose(b.short_ends, a.short_ends, atol=1e-12)
        np.testing.assert_allclose(b.spots, a.spots, atol=1e-12)
        np.testing.assert_allclose(b.numeraire, a.numeraire, atol=1e-12)
        np.testing.assert_allclose(b.deflator, a.deflator, atol=1e-12)
        np.testing.assert_allclose(b.bond_integrals, a.bond_integrals, atol=1e-12)

    def test_antithetic_pairs_mirror_brownian(self):
        spec = vasicek_model()
        plan = SimulationPlan(
            grid=GRID, n_paths=4, seed=2, antithetic=True, engine="state"
        )
        ens = simulate(plan, spec)
        # short-end noise is linear in dW, so pair-averown= deterministic path
        det = simulate(
            SimulationPlan(grid=GRID, n_paths=1, seed=2, zero_noise=True, engine="state"),
            spec,
        )
        pair_mean = 0.5 * (ens.short_ends[0] + ens.short_ends[1])
        np.testing.assert_allclose(pair_mean, det.short_ends[0], atol=1e-12)

    def test_compensated_jumps_are_mean_zero(self):
        spec = vasicek_jump_model(
            c=[0.0, 0.0], gamma_scale=(0.004, 0.004), c_spot=0.0, weights=(2.0,)
        )
        grid = Grid(dt=0.01, horizon_t=0.2, horizon_xi=1.0)
        plan = SimulationPlan(
            grid=grid,
            n_paths=3000,
            seed=11,
            drift="zero",
            snapshots=True,
            obs_stride=grid.n_steps,
            engine="state",
        )
        ens = simulate(plan, spec)
        fam0 = spec.initial.family(grid.dt, grid.n_nodes)
        expect = shift(fam0[1], 0.2).values()
        got = ens.curve_values[:, -1, 1, :]
        se = got.std(axis=0, ddof=1) / math.sqrt(plan.n_paths)
        resid = np.abs(got.mean(axis=0) - expect)
        assert np.all(resid <= 3.0 * se + 1e-12)
