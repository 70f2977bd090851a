"""Ideal-LO joint and correlation densities."""

import math

import numpy as np
import pytest
from scipy import special

from errors import ReconstructionWarning
from physics.densities import Axis, Density1D, estimate_density_1d, l1_distance
from physics.reconstruction import (
    QUAD_REL_TOL,
    antidiagonal_marginal,
    correlation_density_convolution,
    correlation_density_empirical,
    correlation_integral,
    correlation_integral_direct,
    diagonal_marginal,
    joint_from_marginals,
    negative_fraction,
    quad_tolerance,
    reconstruct_joint_ideal,
    reconstruct_w,
    reconstruct_w0,
    theoretical_joint,
    theoretical_w,
    theoretical_w0,
)
from physics.simulator import LOModel, SimulationConfig, simulate
from physics.states import PRCS, Fock, QuadratureConvention, Vacuum, quadrature_density, tabulate_density

WIDE_M = Axis(-8.0, 8.0, 800)


def vacuum_w0(m, sigma0=1.0):
    return 2.0 / (math.pi * sigma0**2) * special.k0(2.0 * np.abs(m) / sigma0**2)


class TestCorrelationQuadrature:
    @pytest.mark.parametrize("m", [-3.0, -1.0, -0.1, -0.03, 0.03, 0.1, 1.0, 3.0])
    def test_substituted_integral_matches_direct(self, m):
        f_d = lambda x: quadrature_density(Fock(n=1), x)
        fast = correlation_integral(f_d, np.array([m]), sigma_s=1.0, d_hi=14.0)[0]
        ref = correlation_integral_direct(f_d, m, sigma_s=1.0, d_hi=14.0)
        assert fast == pytest.approx(ref, rel=1e-6)

    def test_vacuum_closed_form(self):
        m = np.array([-2.0, -0.5, -0.05, 0.05, 0.5, 2.0])
        w = correlation_integral(lambda x: quadrature_density(Vacuum(), x), m, sigma_s=1.0, d_hi=14.0)
        np.testing.assert_allclose(w, vacuum_w0(m), rtol=1e-6)

    def test_zero_m_rejected(self):
        with pytest.raises(ValueError):
            correlation_integral(lambda x: quadrature_density(Vacuum(), x), np.array([0.0, 1.0]), sigma_s=1.0, d_hi=10.0)


class TestIdealCorrelation:
    def test_reconstructed_vacuum_matches_k0(self, fine_axis, m_axis):
        w0 = reconstruct_w0(tabulate_density(Vacuum(), fine_axis), 1.0, m_axis)
        cov = w0.covered
        np.testing.assert_allclose(w0.values[cov], vacuum_w0(m_axis.centers[cov]), rtol=1e-4)
        assert w0.provenance == "analytic"

    def test_reconstructed_fock1_matches_theory(self, fine_axis, m_axis):
        rec = reconstruct_w0(tabulate_density(Fock(n=1), fine_axis), 1.0, m_axis)
        th = theoretical_w0(Fock(n=1), m_axis)
        np.testing.assert_allclose(rec.values[rec.covered], th.values[th.covered], rtol=1e-5)

    def test_sigma0_scaling(self, m_axis):
        conv = QuadratureConvention(sigma0=0.5)
        w0 = theoretical_w0(Vacuum(), m_axis.scaled(0.25), conv, epsilon=0.02 * 0.25)
        cov = w0.covered
        np.testing.assert_allclose(w0.values[cov], vacuum_w0(w0.centers[cov], 0.5), rtol=1e-6)

    @pytest.mark.parametrize("mu", [0.27, 0.62])
    def test_prcs_mean_is_anticorrelated(self, mu):
        w0 = theoretical_w0(PRCS(mu=mu), WIDE_M)
        assert w0.mean() == pytest.approx(-mu / 2, rel=0.03)

    def test_fock1_mean(self):
        assert theoretical_w0(Fock(n=1), WIDE_M).mean() == pytest.approx(-0.5, rel=0.03)

    def test_vacuum_mass_close_to_one(self):
        w0 = theoretical_w0(Vacuum(), WIDE_M)
        assert w0.total_mass == pytest.approx(1.0, abs=5e-3)

    def test_window_is_nan(self, m_axis):
        w0 = theoretical_w0(Vacuum(), m_axis)
        assert np.isnan(w0.values[~w0.covered]).all()

    def test_odd_grid_without_window_rejected(self):
        with pytest.raises(ValueError):
            theoretical_w0(Vacuum(), Axis(-1.0, 1.0, 101), epsilon=0.0)

    def test_truncated_quadrature_axis_warns(self, m_axis):
        with pytest.warns(ReconstructionWarning):
            reconstruct_w0(tabulate_density(Fock(n=1), Axis(-2.0, 2.0, 80)), 1.0, m_axis)


class TestEmpiricalReconstruction:
    def test_vacuum_matches_k0_despite_lo_noise(self, m_axis):
        rec = simulate(SimulationConfig(state=Vacuum(), lo=LOModel(excess_noise_db=26.0), n_samples=1_000_000, seed=29))
        p_d = estimate_density_1d(rec.d, Axis(-8.0, 8.0, 320))
        w0 = reconstruct_w0(p_d, 1.0, m_axis)
        c = m_axis.centers
        band = (np.abs(c) >= 0.05) & (np.abs(c) <= 4.0)
        diff = np.abs(w0.values[band] - vacuum_w0(c[band]))
        assert np.sum(diff) * m_axis.width < 0.01

    def test_matches_ideal_lo_product_histogram(self, m_axis):
        """w0 built from P_D alone agrees with the histogram of i1*i2 under an ideal LO."""
        rec = simulate(SimulationConfig(state=PRCS(mu=0.62), n_samples=1_000_000, seed=31))
        w0 = reconstruct_w0(estimate_density_1d(rec.d, Axis(-8.0, 8.0, 320)), 1.0, m_axis)
        assert w0.provenance == "reconstructed"
        assert l1_distance(w0, correlation_density_empirical(rec, m_axis)) < 0.05

    def test_tolerance_follows_sample_count(self):
        assert quad_tolerance(None) == QUAD_REL_TOL
        assert quad_tolerance(1e4) == pytest.approx(0.01)
        assert quad_tolerance(1e20) == QUAD_REL_TOL


class TestNoisyCorrelation:
    def test_general_sum_width(self, fine_axis, m_axis):
        lo = LOModel(excess_noise_db=6.0)
        rec = reconstruct_w(tabulate_density(Fock(n=1), fine_axis), 10 ** (6 / 20), m_axis)
        th = theoretical_w(Fock(n=1), lo, m_axis)
        np.testing.assert_allclose(rec.values[rec.covered], th.values[th.covered], rtol=1e-5)

    def test_convolution_path_matches_gaussian_sum(self, m_axis):
        sigma_s = 2.0
        p_s = Density1D(
            axis=Axis(-30, 30, 3000),
            values=np.exp(-0.5 * (Axis(-30, 30, 3000).centers / sigma_s) ** 2) / (sigma_s * math.sqrt(2 * math.pi)),
            provenance="analytic",
        )
        p_d = tabulate_density(Fock(n=1), Axis(-14, 14, 2800))
        conv = correlation_density_convolution(p_s, p_d, m_axis)
        ref = theoretical_w(Fock(n=1), LOModel(excess_noise_db=20 * math.log10(sigma_s)), m_axis)
        np.testing.assert_allclose(conv.values[conv.covered], ref.values[ref.covered], rtol=1e-4)

    def test_convolution_matches_product_histogram(self):
        """The marginal-convolution path agrees with the direct histogram of i1*i2."""
        rec = simulate(SimulationConfig(state=Fock(n=1), lo=LOModel(excess_noise_db=3.0), n_samples=1_000_000, seed=21))
        axis = Axis(-10, 10, 200)
        p_s = estimate_density_1d(rec.s, axis)
        p_d = estimate_density_1d(rec.d, axis)
        m_axis = Axis(-4, 4, 200)
        direct = correlation_density_empirical(rec, m_axis, epsilon=0.08)
        conv = correlation_density_convolution(p_s, p_d, m_axis, epsilon=0.08)
        assert l1_distance(direct, conv) < 0.02

    def test_empirical_needs_enough_records(self):
        rec = simulate(SimulationConfig(state=Vacuum(), n_samples=5000, seed=1))
        with pytest.raises(ValueError):
            correlation_density_empirical(rec, Axis(-4, 4, 100))

    def test_negative_fraction(self, vacuum_records):
        expected = 2 / math.pi * math.atan(1 / 10 ** (26 / 20))
        assert negative_fraction(vacuum_records) == pytest.approx(expected, abs=0.003)

    def test_negative_fraction_ideal_lo(self):
        rec = simulate(SimulationConfig(state=Vacuum(), n_samples=100_000, seed=6))
        assert negative_fraction(rec) == pytest.approx(0.5, abs=0.01)


class TestJointMaps:
    AXIS = Axis(-8.0, 8.0, 160)

    def test_ideal_reconstruction_matches_theory(self):
        p0 = reconstruct_joint_ideal(tabulate_density(Fock(n=1), Axis(-14, 14, 2800)), 1.0, self.AXIS)
        th = theoretical_joint(Fock(n=1), self.AXIS)
        np.testing.assert_allclose(p0.values, th.values, atol=1e-5)
        assert p0.total_mass == pytest.approx(1.0, abs=1e-3)

    def test_stderr_propagates(self, vacuum_records):
        p_d = estimate_density_1d(vacuum_records.d, Axis(-8, 8, 160))
        p0 = reconstruct_joint_ideal(p_d, 1.0, self.AXIS)
        assert p0.provenance == "reconstructed"
        assert p0.stderr is not None and np.all(p0.stderr >= 0)

    def test_factorisation(self):
        p_s = tabulate_density(Vacuum(), Axis(-14, 14, 2800))
        p_d = tabulate_density(Fock(n=1), Axis(-14, 14, 2800))
        joint = joint_from_marginals(p_s, p_d, self.AXIS)
        np.testing.assert_allclose(joint.values, theoretical_joint(Fock(n=1), self.AXIS).values, atol=1e-5)

    def test_antidiagonal_recovers_quadrature_variance(self):
        d = antidiagonal_marginal(theoretical_joint(Fock(n=1), self.AXIS))
        var = d.moment(2) / d.total_mass
        assert var == pytest.approx(3.0, rel=5e-3)

    def test_variance_ratio_under_lo_noise(self):
        """The sum channel carries the LO noise; the difference channel does not."""
        axis = Axis(-40.0, 40.0, 400)
        lo = LOModel(excess_noise_db=26.0)
        joint = theoretical_joint(Vacuum(), axis, lo=lo)
        var_s = diagonal_marginal(joint).moment(2)
        var_d = antidiagonal_marginal(joint).moment(2)
        assert var_s / var_d == pytest.approx(10 ** 2.6, rel=0.05)

    def test_overlap_distinguishes_states(self):
        from physics.inversion import overlap_2d

        c = overlap_2d(theoretical_joint(Fock(n=1), self.AXIS), theoretical_joint(Vacuum(), self.AXIS))
        assert c == pytest.approx(1 / math.sqrt(3), rel=1e-3)
        assert c < 0.9
