"""Minimal-market-model closed forms and Monte-Carlo agreement."""

import math

import numpy as np
import pytest

from hjmlab.deflator import martingale_report
from hjmlab.invariance import cone_membership
from hjmlab.mmm import (
    MmmParams,
    bond0_mmm,
    forward_rates_mmm,
    gop_deflated_series,
    gop_step,
    m_contribution,
    mprc,
    phi_time,
    simulate_gop,
    slm_check,
)

P = MmmParams.build(alpha0=0.04, eta=0.1, r=0.02)


class TestPhiTime:
    def test_zero(self):
        assert phi_time(P, 0.0) == 0.0

    def test_reference_value(self):
        assert phi_time(P, 1.0) == pytest.approx(0.1 * (math.e ** 0.1 - 1))

    def test_monotone(self):
        assert phi_time(P, 2.0) > phi_time(P, 1.0) > 0.0

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            phi_time(P, -0.5)


class TestMprc:
    def test_short_maturity_limit_is_one(self):
        assert mprc(P, 0.0, 1e-9, 1.0) == pytest.approx(1.0)

    def test_reference_value(self):
        # xbar = 1 and phi difference 0.5 gives 1 - e^{-1}
        p = MmmParams.build(alpha0=4.0, eta=1e-9, r=0.0)
        t_mat = 0.5  # phi(T) ~ alpha0 T / 4 = T for tiny eta
        assert mprc(p, 0.0, t_mat, 1.0) == pytest.approx(1 - math.exp(-1.0), rel=1e-6)

    def test_long_maturity_limit_is_zero(self):
        assert mprc(P, 0.0, 400.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            mprc(P, 1.0, 0.5, 1.0)
        with pytest.raises(ValueError):
            mprc(P, 0.0, 1.0, 0.0)


class TestGopStep:
    def test_deterministic_part(self):
        out = gop_step(1.0, P, 0.5, 0.01, 0.0)
        assert out == pytest.approx(1.0 + 0.04 * math.exp(0.05) * 0.01)

    def test_zero_state_has_no_diffusion(self):
        out = gop_step(0.0, P, 0.0, 0.01, 123.456)
        assert out == pytest.approx(0.04 * 0.01)

    def test_mc_mean_matches_integrated_drift(self):
        times, paths, _ = simulate_gop(P, 1e-2, 1.0, 20000, seed=4, obs_stride=100)
        expect = 1.0 + 0.04 / 0.1 * (math.exp(0.1) - 1.0)
        got = paths[:, -1].mean()
        se = paths[:, -1].std(ddof=1) / math.sqrt(paths.shape[0])
        assert abs(got - expect) <= 3 * se

    def test_determinism(self):
        a = simulate_gop(P, 1e-2, 0.5, 50, seed=9)[1]
        b = simulate_gop(P, 1e-2, 0.5, 50, seed=9)[1]
        np.testing.assert_array_equal(a, b)


class TestBond0:
    def test_zero_rate_equals_mprc(self):
        p = MmmParams.build(alpha0=4.0, eta=1e-9, r=0.0)
        assert bond0_mmm(p, 0.0, 0.5, 1.0) == pytest.approx(
            mprc(p, 0.0, 0.5, 1.0)
        )

    def test_short_maturity_limit(self):
        assert bond0_mmm(P, 0.0, 1e-8, 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_strictly_below_discount(self):
        # the gap e^{-xbar/(2 phi(T))} only rises above float noise at
        # longer maturities; at T=1 it is ~1e-21
        for t_mat in (5.0, 20.0, 40.0):
            disc = math.exp(-P.r.integral(0.0, t_mat))
            assert bond0_mmm(P, 0.0, t_mat, 1.0) < disc


class TestForwardCurve:
    def test_riskless_short_end_is_rate(self):
        f = forward_rates_mmm(P, 0, 0.0, 1.0, np.array([1e-9, 0.5, 1.0]))
        assert f[0] == pytest.approx(0.02, abs=1e-9)

    def test_spreads_subtract(self):
        p = MmmParams.build(alpha0=0.04, eta=0.1, r=0.02, a_spreads=(-0.02, -0.01))
        mats = np.linspace(0.01, 3.0, 50)
        f0 = forward_rates_mmm(p, 0, 0.0, 1.0, mats)
        f1 = forward_rates_mmm(p, 1, 0.0, 1.0, mats)
        f2 = forward_rates_mmm(p, 2, 0.0, 1.0, mats)
        np.testing.assert_allclose(f1, f0 + 0.02)
        np.testing.assert_allclose(f2, f0 + 0.01)
        assert np.all(f1 >= f2)  # ordered spreads give cone-ordered curves

    def test_family_in_cone(self):
        p = MmmParams.build(alpha0=0.04, eta=0.1, r=0.02, a_spreads=(-0.02, -0.01))
        from hjmlab.mmm import forward_family_mmm

        fam = forward_family_mmm(p, 0.0, 1.0, 0.01, 301)
        assert cone_membership(fam).member

    def test_m_contribution_matches_finite_difference(self):
        # closed-form dT derivative of -log M vs central differences
        for t_mat in (0.5, 2.0, 10.0, 30.0):
            h = 1e-5
            fd = -(
                math.log(mprc(P, 0.0, t_mat + h, 1.0))
                - math.log(mprc(P, 0.0, t_mat - h, 1.0))
            ) / (2 * h)
            assert m_contribution(P, 0.0, t_mat, 1.0) == pytest.approx(
                fd, abs=1e-6
            )

    def test_integral_consistency_with_bond(self):
        # exp(-int f0) reproduces the closed-form bond price
        from scipy.integrate import quad

        p = MmmParams.build(alpha0=0.4, eta=0.1, r=0.02)
        t_mat, xbar = 2.0, 1.0
        val, _ = quad(
            lambda u: forward_rates_mmm(p, 0, 0.0, xbar, np.array([u]))[0],
            1e-12,
            t_mat,
            limit=200,
        )
        assert math.exp(-val) == pytest.approx(
            bond0_mmm(p, 0.0, t_mat, xbar), abs=1e-6
        )


class TestStrictLocalMartingale:
    def test_mc_matches_closed_form_and_sits_below_one(self):
        # long maturity makes the gap visible well beyond noise
        out = slm_check(P, maturity=20.0, n_paths=4000, dt=0.01, seed=12)
        assert out["within_3se"], out
        assert out["strictly_below_one"]
        assert out["closed_form"] < 0.95

    def test_truncation_rare_at_defaults(self):
        out = slm_check(P, maturity=1.0, n_paths=2000, dt=1e-3, seed=3)
        assert out["truncation_rate"] < 1e-3

    def test_deflator_consistency_martingale_pass(self):
        p = MmmParams.build(alpha0=0.04, eta=0.1, r=0.02, a_spreads=(-0.02, -0.01))
        times, paths, _ = simulate_gop(p, 0.01, 1.0, 3000, seed=21, obs_stride=25)
        series = gop_deflated_series(p, times, paths, maturities=(2.0, 5.0))
        report = martingale_report(series)
        assert report["passed"], [
            c for c in report["cells"] if c["status"] == "FAIL"
        ]
