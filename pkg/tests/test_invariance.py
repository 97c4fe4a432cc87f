"""Cone membership, coefficient conditions, and MC ordering verification."""

import numpy as np
import pytest

from hjmlab.curves import CurveFamily, constant_curve
from hjmlab.invariance import (
    check_cone_coeff_conditions,
    cone_membership,
    monotonicity_report,
)
from hjmlab.modelspec import Grid
from hjmlab.presets import (
    deterministic_spread_model,
    ordered_cone_model,
    vasicek_model,
)
from hjmlab.solver import SimulationPlan, simulate

GRID = Grid(dt=0.02, horizon_t=0.5, horizon_xi=2.0)


def const_family(levels, n=101, dx=0.01):
    return CurveFamily(tuple(constant_curve(v, dx, n) for v in levels))


class TestConeMembership:
    def test_ordered_constants_member(self):
        fam = const_family([0.02, 0.03, 0.02, 0.01])
        assert cone_membership(fam).member

    def test_unordered_flagged_at_origin(self):
        fam = const_family([0.02, 0.01, 0.02])
        rep = cone_membership(fam)
        assert not rep.member
        i, j, xi, gap = rep.worst_violation
        assert (i, j) == (1, 2)
        assert xi == 0.0
        assert gap == pytest.approx(0.01)

    def test_equal_curves_member_boundary(self):
        fam = const_family([0.02, 0.03, 0.03])
        assert cone_membership(fam).member

    def test_single_risky_vacuous(self):
        rep = cone_membership(const_family([0.02, 0.03]))
        assert rep.member and rep.vacuous


class TestCoefficientConditions:
    def test_identical_risky_vols_pass(self):
        spec = ordered_cone_model(m=3)
        rep = check_cone_coeff_conditions(spec, GRID, samples=16, seed=2)
        assert rep["passed"], rep

    def test_scaled_beta_fails_touching_equality(self):
        spec = vasicek_model(
            m=2, c=[0.006, 0.01, 0.02], delta=[-1.2, -1.0, -1.0]
        )
        rep = check_cone_coeff_conditions(spec, GRID, samples=16, seed=2)
        assert not rep["passed"]
        assert rep["conditions"]["beta_touching_equality"] == "FAIL"
        assert rep["counterexample"] is not None

    def test_no_jumps_vacuous_jump_conditions(self):
        spec = ordered_cone_model(m=2)
        rep = check_cone_coeff_conditions(spec, GRID, samples=4, seed=0)
        assert rep["conditions"]["jump_stays_in_cone"] == "VACUOUS"

    def test_jump_model_with_identical_gammas_passes(self):
        spec = ordered_cone_model(m=3, with_jumps=True)
        rep = check_cone_coeff_conditions(spec, GRID, samples=12, seed=4)
        assert rep["passed"], rep

    def test_deterministic_given_seed(self):
        spec = ordered_cone_model(m=3)
        a = check_cone_coeff_conditions(spec, GRID, samples=8, seed=7)
        b = check_cone_coeff_conditions(spec, GRID, samples=8, seed=7)
        assert a == b


class TestMonotonicityReport:
    def run_tracked(self, spec, spots=None, n_paths=200, seed=3):
        plan = SimulationPlan(
            grid=GRID,
            n_paths=n_paths,
            seed=seed,
            maturities=(1.0, 2.0),
            obs_stride=5,
            track_invariance=True,
            engine="state",
            initial_spots=spots,
        )
        return simulate(plan, spec)

    def test_cone_model_clean(self):
        spec = ordered_cone_model(m=3)
        ens = self.run_tracked(spec)
        rep = monotonicity_report(ens, spec)
        assert rep["passed"], rep
        assert rep["cone_violations"] == 0
        assert rep["order_violations"] == 0

    def test_jump_cone_model_clean(self):
        spec = ordered_cone_model(m=3, with_jumps=True)
        ens = self.run_tracked(spec, n_paths=100)
        rep = monotonicity_report(ens, spec)
        assert rep["passed"], rep

    def test_deterministic_spread_clean(self):
        spec = deterministic_spread_model(m=2, a_risky=(-0.02, -0.01))
        ens = self.run_tracked(spec, n_paths=10)
        rep = monotonicity_report(ens, spec)
        assert rep["passed"]
        assert rep["preconditions"]["order_condition"]["passed"]

    def test_identical_risky_indices_equality_throughout(self):
        spec = ordered_cone_model(m=2, spread=0.0)
        ens = self.run_tracked(spec, n_paths=50)
        rep = monotonicity_report(ens, spec)
        assert rep["cone_violations"] == 0 and rep["order_violations"] == 0

    def test_reversed_initial_spots_flagged_at_t0(self):
        spec = ordered_cone_model(m=3)
        ens = self.run_tracked(spec, spots=np.array([1.0, 1.2, 1.1, 1.0]))
        rep = monotonicity_report(ens, spec)
        assert not rep["passed"]
        assert not rep["preconditions"]["initial_spots_ordered"]
        assert rep["order_violations"] > 0

    def test_untracked_ensemble_rejected(self):
        spec = ordered_cone_model(m=2)
        plan = SimulationPlan(grid=GRID, n_paths=4, seed=1, engine="state")
        ens = simulate(plan, spec)
        with pytest.raises(ValueError):
            monotonicity_report(ens, spec)
