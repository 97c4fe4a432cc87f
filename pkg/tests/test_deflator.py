"""Deflator construction, deflated prices, martingale tests, representation."""

import math

import numpy as np
import pytest

from hjmlab.deflator import (
    InsufficientSampleError,
    deflated_series,
    lmd_step,
    martingale_report,
    martingale_zscore,
    y_representation_check,
)
from hjmlab.modelspec import Grid, InitialCurveSpec
from hjmlab.presets import vasicek_jump_model, vasicek_model
from hjmlab.solver import SimulationPlan, StepInputs, simulate

GRID = Grid(dt=0.01, horizon_t=0.5, horizon_xi=2.5)


class TestLmdStep:
    def test_trivial_deflator(self):
        spec = vasicek_model(lam=0.0)
        z = lmd_step(1.7, 0.01, StepInputs(np.zeros(1)), spec)
        assert z == pytest.approx(1.7)

    def test_brownian_tilt(self):
        spec = vasicek_model(lam=0.2)
        z = lmd_step(2.0, 0.01, StepInputs(np.array([0.1])), spec)
        assert z == pytest.approx(2.0 * math.exp(0.02 - 0.0002))

    def test_jump_halves(self):
        spec = vasicek_jump_model(psi=-0.5, weights=(0.4,))
        z0 = 1.0
        z = lmd_step(z0, 0.01, StepInputs(np.zeros(1), np.array([1])), spec)
        cont = math.exp(-0.01 * 0.4 * (-0.5))
        assert z == pytest.approx(0.5 * cont)

    def test_positivity_required(self):
        spec = vasicek_model()
        with pytest.raises(ValueError):
            lmd_step(0.0, 0.01, StepInputs(np.zeros(1)), spec)


def zero_coefficient_spec(level=0.05):
    return vasicek_model(
        m=1,
        c=[0.0, 0.0],
        delta=[-1.0, -1.0],
        r=level,
        initial=InitialCurveSpec.flat([level, level]),
    )


class TestDeflatedSeries:
    def test_initial_cross_section(self):
        spec = vasicek_model()
        plan = SimulationPlan(
            grid=GRID, n_paths=4, seed=1, maturities=(1.0, 2.0), obs_stride=10
        )
        series = deflated_series(simulate(plan, spec))
        fam0 = spec.initial.family(GRID.dt, GRID.n_nodes)
        from hjmlab.solver import bond_price

        for a, i in enumerate(series.indices):
            for bix, t_mat in enumerate(series.maturities):
                assert series.initial[a, bix] == pytest.approx(
                    bond_price(fam0[i], t_mat), rel=1e-12
                )

    def test_flat_zero_coefficient_series_is_constant(self):
        spec = zero_coefficient_spec(0.05)
        plan = SimulationPlan(
            grid=GRID, n_paths=3, seed=2, maturities=(2.0,), obs_stride=10
        )
        series = deflated_series(simulate(plan, spec))
        np.testing.assert_allclose(
            series.values, math.exp(-0.05 * 2.0), atol=1e-12
        )

    def test_absorbed_spot_stays_zero(self):
        spec = vasicek_jump_model(
            c_spot=-1.0, gamma_scale=(0.0, 0.0), weights=(80.0,), lambda_bound=2.0
        )
        plan = SimulationPlan(
            grid=GRID, n_paths=6, seed=3, maturities=(1.0,), obs_stride=5
        )
        ens = simulate(plan, spec)
        series = deflated_series(ens, indices=[1])
        absorbed = ens.spots[:, -1, 1] == 0.0
        assert absorbed.any()  # intensity 80 on half a year: jumps certain
        assert np.all(series.values[absorbed, -1] == 0.0)

    def test_scaling_in_initial_spots(self):
        spec = vasicek_model()
        kw = dict(grid=GRID, n_paths=5, seed=7, maturities=(1.0,), obs_stride=10)
        base = deflated_series(simulate(SimulationPlan(**kw), spec))
        scaled = deflated_series(
            simulate(
                SimulationPlan(initial_spots=np.array([1.0, 2.5]), **kw), spec
            )
        )
        np.testing.assert_allclose(
            scaled.values[:, :, 1], 2.5 * base.values[:, :, 1], rtol=1e-13
        )

    def test_unrecorded_maturity_rejected(self):
        spec = vasicek_model()
        plan = SimulationPlan(grid=GRID, n_paths=2, seed=1, maturities=(1.0,))
        ens = simulate(plan, spec)
        with pytest.raises(ValueError):
            deflated_series(ens, maturities=[1.7])


class TestMartingaleZscore:
    def test_needs_paths(self):
        spec = vasicek_model()
        plan = SimulationPlan(grid=GRID, n_paths=8, seed=1, maturities=(1.0,))
        series = deflated_series(simulate(plan, spec))
        with pytest.raises(InsufficientSampleError):
            martingale_zscore(series, 0.5)

    def test_zero_noise_model_scores_zero(self):
        spec = zero_coefficient_spec()
        plan = SimulationPlan(
            grid=GRID, n_paths=120, seed=1, maturities=(1.0,), obs_stride=25
        )
        series = deflated_series(simulate(plan, spec))
        z = martingale_zscore(series, 0.5)
        assert np.all(z == 0.0)

    def test_valid_spec_passes_three_sigma(self):
        spec = vasicek_model(m=1, lam=0.2)
        plan = SimulationPlan(
            grid=GRID, n_paths=4000, seed=20, maturities=(1.0, 2.0), obs_stride=25
        )
        report = martingale_report(deflated_series(simulate(plan, spec)))
        assert report["passed"], [c for c in report["cells"] if c["status"] == "FAIL"]

    def test_drift_violation_is_detected_with_matching_sign(self):
        # adding +p to the drift lifts curves, so deflated prices trend down
        spec = vasicek_model(m=0, c=[0.01], delta=[-1.0])
        kw = dict(grid=GRID, n_paths=2000, seed=4, maturities=(2.0,), obs_stride=50)
        up = deflated_series(
            simulate(SimulationPlan(perturbation=0.02, **kw), spec)
        )
        dn = deflated_series(
            simulate(SimulationPlan(perturbation=-0.02, **kw), spec)
        )
        z_up = martingale_zscore(up, 0.5)[0, 0]
        z_dn = martingale_zscore(dn, 0.5)[0, 0]
        assert z_up < -3.0 and z_dn > 3.0


class TestYRepresentation:
    def test_zero_coefficients_exact(self):
        spec = zero_coefficient_spec()
        plan = SimulationPlan(grid=GRID, n_paths=3, seed=5, maturities=(1.0,))
        gap = y_representation_check(spec, plan, index=1, maturity=1.0)
        assert gap <= 1e-12

    def test_vasicek_gap_is_discretization_only(self):
        spec = vasicek_model(m=1, lam=0.2)
        grid = Grid(dt=0.005, horizon_t=0.5, horizon_xi=2.0)
        plan = SimulationPlan(grid=grid, n_paths=50, seed=6, maturities=(1.0,))
        gap = y_representation_check(spec, plan, index=1, maturity=1.0)
        assert gap <= 1e-2

    def test_jump_spec_gap_small(self):
        spec = vasicek_jump_model(c=[0.0, 0.0], gamma_scale=(0.003, 0.004), psi=0.1)
        grid = Grid(dt=0.005, horizon_t=0.5, horizon_xi=2.0)
        plan = SimulationPlan(grid=grid, n_paths=50, seed=8, maturities=(1.0,))
        gap = y_representation_check(spec, plan, index=1, maturity=1.0)
        assert gap <= 1e-3
