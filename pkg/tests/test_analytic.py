import math

import numpy as np
import pytest
from scipy.integrate import quad, simpson

from lamhb import analytic
from lamhb.analytic import (
    AnalyticError,
    LinearProfileParams,
    PowerLawSolutionParams,
    eddy_loss_density_linear,
    linear_B_profile,
    linear_H_profile,
    local_flux_from_average,
    mayergoyz_B_magnitude,
    penetration_depth_z0,
    penetration_fits_sheet,
    skin_depth,
    unit_average_cosh_profile,
)


class TestSkinDepth:
    def test_paper_point(self):
        delta = skin_depth(400.0, 10.4e6, 2 * math.pi * 50.0)
        assert delta == pytest.approx(math.sqrt(800.0 / (10.4e6 * 100 * math.pi)),
                                      rel=1e-15)
        assert delta == pytest.approx(4.95e-4, rel=2e-3)

    def test_quarter_on_quadrupled_frequency(self):
        d1 = skin_depth(400.0, 1e7, 100.0)
        d4 = skin_depth(400.0, 1e7, 400.0)
        assert d4 == pytest.approx(d1 / 2, rel=1e-14)

    def test_reluctivity_scaling(self):
        d1 = skin_depth(300.0, 1e7, 100.0)
        d2 = skin_depth(600.0, 1e7, 100.0)
        assert d2 == pytest.approx(d1 * math.sqrt(2), rel=1e-14)

    def test_rejects_nonpositive(self):
        for bad in ((0, 1, 1), (1, -1, 1), (1, 1, 0)):
            with pytest.raises(AnalyticError):
                skin_depth(*bad)


class TestCoshProfiles:
    def test_surface_value(self):
        p = LinearProfileParams(surface=3.0 - 1.0j, k=(1 + 1j) / 1e-4, d=1e-3)
        assert linear_H_profile(p.d / 2, p) == pytest.approx(p.surface)
        assert linear_B_profile(-p.d / 2, p) == pytest.approx(p.surface)

    def test_uniform_limit(self):
        p = LinearProfileParams(surface=2.0, k=0.0, d=1e-3)
        assert linear_B_profile(0.0, p) == pytest.approx(2.0)

    def test_interior_below_surface(self, rng):
        for _ in range(50):
            d = 10 ** rng.uniform(-4, -2)
            delta = d * 10 ** rng.uniform(-1, 1)
            p = LinearProfileParams(surface=1.0, k=(1 + 1j) / delta, d=d)
            assert abs(linear_B_profile(0.0, p)) < abs(
                linear_B_profile(d / 2, p))

    def test_outside_thickness_rejected(self):
        p = LinearProfileParams(surface=1.0, k=(1 + 1j) / 1e-4, d=1e-3)
        with pytest.raises(AnalyticError):
            linear_H_profile(p.d, p)

    def test_overflow_safe_at_extreme_thickness(self):
        p = LinearProfileParams(surface=1.0, k=(1 + 1j) / 1e-7, d=1.0)
        with np.errstate(over="raise"):
            val = linear_B_profile(0.0, p)
        assert abs(val) < 1e-300 or val == 0.0


class TestEddyLossDensity:
    def test_low_frequency_limit(self):
        # series limit H0^2 d^2 / (6 sigma delta^4) = sigma w^2 d^2 B0^2 / 24
        h0, sigma, d = 800.0, 1e7, 1e-4
        nu = 500.0
        omega = 1.0
        delta = skin_depth(nu, sigma, omega)
        val = eddy_loss_density_linear(h0, sigma, d, delta)
        b0 = h0 / nu
        assert val == pytest.approx(sigma * omega ** 2 * d * d * b0 * b0 / 24,
                                    rel=1e-6)

    def test_paper_regime_value(self):
        # cross-check against the |J|^2 quadrature with the cosh field
        h0, sigma, d = 1000.0, 10.4e6, 5e-4
        delta = 4.95e-4
        k = (1 + 1j) / delta

        def j_sq(z):
            return abs(-k * h0 * np.sinh(k * z) / np.cosh(k * d / 2)) ** 2

        q, _ = quad(j_sq, -d / 2, d / 2, limit=200)
        oracle = q / (2 * sigma * d)
        val = eddy_loss_density_linear(h0, sigma, d, delta)
        assert val == pytest.approx(oracle, rel=1e-12)
        assert val == pytest.approx(6.5e4, rel=0.03)

    def test_quadrature_identity_random(self, rng):
        for _ in range(100):
            nu = 10 ** rng.uniform(2, 4)
            sigma = 10 ** rng.uniform(6, 7.5)
            d = 10 ** rng.uniform(-4, -2.5)
            omega = 2 * math.pi * 10 ** rng.uniform(1, 4.5)
            h0 = 10 ** rng.uniform(1, 3.5)
            delta = skin_depth(nu, sigma, omega)
            k = (1 + 1j) / delta

            def j_sq(z):
                return abs(-k * h0 * np.sinh(k * z) / np.cosh(k * d / 2)) ** 2

            q, _ = quad(j_sq, -d / 2, d / 2, limit=400)
            assert eddy_loss_density_linear(h0, sigma, d, delta) == \
                pytest.approx(q / (2 * sigma * d), rel=1e-8)

    def test_monotone_decreasing_in_delta(self):
        d = 5e-4
        deltas = np.linspace(d / 20, 20 * d, 400)
        vals = [eddy_loss_density_linear(100.0, 1e7, d, dl) for dl in deltas]
        assert np.all(np.diff(vals) < 0)

    def test_rejects_nonpositive(self):
        with pytest.raises(AnalyticError):
            eddy_loss_density_linear(1.0, 1e7, 0.0, 1e-4)


class TestPowerLawSolution:
    def params(self, n=9.0, f=1000.0):
        return PowerLawSolutionParams(mu_s=2.5e-3, h_s=500.0, n=n,
                                      omega=2 * math.pi * f, sigma=10.4e6,
                                      d=1e-3)

    def test_penetration_depth_value(self):
        p = self.params()
        num = (2 * 9 * 10 * 28 ** 2) ** 0.25
        expected = num / (8 * math.sqrt(p.omega * p.sigma * p.mu_s))
        assert penetration_depth_z0(p) == pytest.approx(expected, rel=1e-14)
        assert penetration_depth_z0(p) == pytest.approx(1.9e-4, rel=0.02)

    def test_penetration_scaling(self):
        p1 = self.params(f=1000.0)
        p4 = self.params(f=4000.0)
        assert penetration_depth_z0(p4) == pytest.approx(
            penetration_depth_z0(p1) / 2, rel=1e-12)

    def test_exponent_must_exceed_one(self):
        with pytest.raises(AnalyticError):
            self.params(n=1.0)

    def test_surface_value(self):
        p = self.params()
        assert mayergoyz_B_magnitude(p.d / 2, p) == pytest.approx(
            p.mu_s * p.h_s, rel=1e-12)

    def test_core_plateau_is_zero(self):
        p = self.params(f=10000.0)  # shallow penetration
        assert penetration_fits_sheet(p)
        assert mayergoyz_B_magnitude(0.0, p) == 0.0

    def test_continuity_at_penetration_front(self):
        # the bracket vanishes with a fractional power, so the approach to
        # zero is slow but follows (eps/z0)^(2/(n-1)) exactly
        p = self.params(f=10000.0)
        z0 = penetration_depth_z0(p)
        z_edge = -p.d / 2 + z0
        for eps in (1e-6 * p.d, 1e-9 * p.d):
            expected = p.mu_s * p.h_s * (eps / z0) ** (2 / (p.n - 1))
            assert mayergoyz_B_magnitude(z_edge - eps, p) == pytest.approx(
                expected, rel=1e-6)
            assert mayergoyz_B_magnitude(z_edge + eps, p) == 0.0

    def test_symmetric_nonnegative_bounded(self, rng):
        p = self.params(f=3000.0)
        z = np.linspace(-p.d / 2, p.d / 2, 301)
        prof = mayergoyz_B_magnitude(z, p)
        assert np.allclose(prof, prof[::-1], atol=1e-15)
        assert np.all(prof >= 0)
        assert np.all(prof <= p.mu_s * p.h_s * (1 + 1e-12))

    def test_overlap_clamps_plateau(self):
        p = self.params(f=10.0)  # z0 exceeds the half thickness
        assert not penetration_fits_sheet(p)
        center = mayergoyz_B_magnitude(0.0, p)
        assert center > 0.0
        assert mayergoyz_B_magnitude(p.d / 2, p) == pytest.approx(
            p.mu_s * p.h_s, rel=1e-12)


class TestLocalFluxFromAverage:
    def test_uniform_limit(self):
        val = local_flux_from_average(1.5 + 0.5j, 1e-4, 400.0, 1e7, 0.0, 1e-3)
        assert val == 1.5 + 0.5j
        # tiny d/delta behaves the same
        val = local_flux_from_average(1.5, 0.0, 400.0, 1e3, 1e-3, 1e-3)
        assert val == pytest.approx(1.5, rel=1e-9)

    def test_preserves_average(self, rng):
        for _ in range(100):
            d = 10 ** rng.uniform(-4, -2.5)
            d_over_delta = 10 ** rng.uniform(-2, 1)
            nu0 = 10 ** rng.uniform(2, 4)
            sigma = 10 ** rng.uniform(6, 7.5)
            omega = 2 * nu0 * d_over_delta ** 2 / (sigma * d * d)
            b_avg = complex(rng.normal(), rng.normal())
            z = np.linspace(-d / 2, d / 2, 4097)
            prof = local_flux_from_average(b_avg, z, nu0, sigma, omega, d)
            avg = simpson(prof, x=z) / d
            assert abs(avg - b_avg) <= 1e-10 * abs(b_avg)

    def test_midpoint_below_surface_at_kilohertz(self):
        d = 1e-3
        mid = local_flux_from_average(1.0, 0.0, 400.0, 10.4e6,
                                      2 * math.pi * 1000.0, d)
        surf = local_flux_from_average(1.0, d / 2, 400.0, 10.4e6,
                                       2 * math.pi * 1000.0, d)
        assert abs(mid) < abs(surf)

    def test_outside_sheet_rejected(self):
        with pytest.raises(AnalyticError):
            local_flux_from_average(1.0, 1e-3, 400.0, 1e7, 100.0, 1e-3)

    def test_unit_average_shape_consistency(self):
        d, delta = 5e-4, 2e-4
        z = np.linspace(-d / 2, d / 2, 2049)
        shape = unit_average_cosh_profile(z, delta, d)
        assert simpson(shape, x=z) / d == pytest.approx(1.0, rel=1e-10)
