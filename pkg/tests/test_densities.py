"""Histogram estimators and the statistical object types."""

import math

import numpy as np
import pytest
from scipy import stats

from errors import ReconstructionWarning
from physics.densities import (
    Axis,
    CorrelationDensity,
    Density1D,
    Density2D,
    estimate_density_1d,
    estimate_sigma0,
    joint_histogram,
    l1_distance,
    q_square_transform,
    require_same_grid,
    symmetrize,
    symmetry_violation,
)
from physics.states import Coherent, Vacuum, tabulate_density


@pytest.fixture
def rng():
    return np.random.default_rng(123)


class TestAxis:
    def test_geometry(self):
        axis = Axis(-1.0, 1.0, 4)
        np.testing.assert_allclose(axis.edges, [-1, -0.5, 0, 0.5, 1])
        np.testing.assert_allclose(axis.centers, [-0.75, -0.25, 0.25, 0.75])
        assert axis.is_symmetric
        assert not Axis(0.0, 1.0, 4).is_symmetric

    def test_invalid(self):
        with pytest.raises(ValueError):
            Axis(1.0, 1.0, 3)
        with pytest.raises(ValueError):
            Axis(-1.0, 1.0, 0)
        with pytest.raises(ValueError):
            Axis(-np.inf, 1.0, 3)

    def test_dict_round_trip(self):
        axis = Axis(-0.3, 7.1, 13)
        assert Axis.from_dict(axis.to_dict()) == axis


class TestDensityEstimate:
    def test_unit_mass_and_stderr(self, rng):
        axis = Axis(-8, 8, 160)
        p = estimate_density_1d(rng.normal(size=50_000), axis)
        assert p.total_mass == pytest.approx(1.0, abs=1e-12)
        frac = p.values * axis.width
        np.testing.assert_allclose(p.stderr, np.sqrt(frac * (1 - frac) / 50_000) / axis.width)
        assert p.n_samples == 50_000
        assert p.provenance == "empirical"

    def test_matches_gaussian(self, rng):
        axis = Axis(-6, 6, 60)
        p = estimate_density_1d(rng.normal(size=200_000), axis)
        assert l1_distance(p, tabulate_density(Vacuum(), axis)) < 0.02

    def test_too_few_samples(self, rng):
        with pytest.raises(ValueError):
            estimate_density_1d(rng.normal(size=999), Axis(-5, 5, 10))

    def test_overflow_limit(self, rng):
        samples = rng.normal(size=10_000)
        with pytest.raises(ValueError):
            estimate_density_1d(samples, Axis(-1, 1, 20))
        p = estimate_density_1d(samples, Axis(-1, 1, 20), max_overflow=None)
        assert p.overflow == int(np.sum(np.abs(samples) >= 1))

    def test_empirical_cannot_be_negative(self):
        with pytest.raises(ValueError):
            Density1D(axis=Axis(-1, 1, 2), values=np.array([-1.0, 1.0]))
        Density1D(axis=Axis(-1, 1, 2), values=np.array([-1.0, 1.0]), provenance="inverted")

    def test_sigma0_estimate(self, vacuum_records):
        assert estimate_sigma0(vacuum_records) == pytest.approx(1.0, rel=0.01)


class TestJointHistogram:
    def test_mass_and_shape(self, vacuum_records):
        axis = Axis(-60, 60, 120)
        p = joint_histogram(vacuum_records, axis)
        assert p.values.shape == (120, 120)
        assert p.total_mass == pytest.approx(1.0, abs=1e-12)
        assert p.stderr.shape == (120, 120)

    def test_strongly_correlated_under_lo_noise(self, vacuum_records):
        """At 26 dB the common LO fluctuation dominates both outputs."""
        assert np.corrcoef(vacuum_records.i1, vacuum_records.i2)[0, 1] > 0.99


class TestSymmetry:
    def test_symmetrize_symmetric_input(self):
        p = tabulate_density(Vacuum(), Axis(-8, 8, 161))
        sym, asym = symmetrize(p)
        assert asym == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(sym.values, p.values, rtol=1e-14)

    def test_asymmetry_norm(self):
        p = tabulate_density(Coherent(amplitude=1.0), Axis(-10, 10, 400))
        sym, asym = symmetrize(p)
        assert asym > 0.5
        np.testing.assert_allclose(sym.values, sym.values[::-1])
        assert sym.total_mass == pytest.approx(p.total_mass)

    def test_symmetrize_needs_symmetric_axis(self):
        with pytest.raises(ValueError):
            symmetrize(tabulate_density(Vacuum(), Axis(-8, 9, 170)))

    def test_violation(self):
        assert not symmetry_violation(tabulate_density(Vacuum(), Axis(-8, 8, 160)))
        assert symmetry_violation(tabulate_density(Coherent(amplitude=0.5), Axis(-8, 8, 160)))


class TestQSquare:
    def test_mass_conserved(self):
        p = tabulate_density(Vacuum(), Axis(-8, 8, 320))
        q = q_square_transform(p)
        assert q.axis.lo == 0.0 and q.axis.hi == pytest.approx(64.0)
        assert q.total_mass == pytest.approx(p.total_mass, abs=1e-12)

    def test_chi_square_shape(self):
        p = tabulate_density(Vacuum(), Axis(-8, 8, 1600))
        q = q_square_transform(p, Axis(0.0, 16.0, 400))
        keep = (q.centers > 1.0) & (q.centers < 9.0)
        np.testing.assert_allclose(q.values[keep], stats.chi2.pdf(q.centers[keep], 1), rtol=1e-2)

    def test_asymmetric_input_warns_and_uses_both_branches(self):
        p = tabulate_density(Coherent(amplitude=0.5), Axis(-8, 8, 320))
        with pytest.warns(ReconstructionWarning):
            q = q_square_transform(p)
        assert q.total_mass == pytest.approx(p.total_mass, abs=1e-12)


class TestCorrelationDensity:
    def _log_model(self, a=-1.0, b=1.0):
        axis = Axis(-1.0, 1.0, 100)
        values = a * np.log(np.abs(axis.centers)) + b
        return CorrelationDensity(axis=axis, values=values, epsilon=0.02, provenance="analytic"), a, b

    def test_window_bins_are_nan(self):
        w, _, _ = self._log_model()
        assert np.isnan(w.values[~w.covered]).all()
        assert (~w.covered).sum() == 2
        assert np.isfinite(w.values[w.covered]).all()

    def test_excluded_mass_exact_for_log_model(self):
        w, a, b = self._log_model()
        span = 0.02
        expected = 2 * (a * (span * math.log(span) - span) + b * span)
        assert w.excluded_mass == pytest.approx(expected, rel=1e-9)
        assert w.total_mass == pytest.approx(w.covered_mass + expected)

    def test_symmetric_mean_is_zero(self):
        w, _, _ = self._log_model()
        assert w.mean() == pytest.approx(0.0, abs=1e-12)

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValueError):
            CorrelationDensity(axis=Axis(-1, 1, 10), values=np.ones(10), epsilon=-0.1)


class TestComparisons:
    def test_grid_mismatch(self):
        a = tabulate_density(Vacuum(), Axis(-8, 8, 160))
        b = tabulate_density(Vacuum(), Axis(-8, 8, 161))
        with pytest.raises(ValueError):
            require_same_grid(a, b)
        with pytest.raises(ValueError):
            l1_distance(a, b)

    def test_type_mismatch(self):
        axis = Axis(-1, 1, 4)
        with pytest.raises(ValueError):
            require_same_grid(Density1D(axis=axis, values=np.ones(4)), Density2D(x_axis=axis, y_axis=axis, values=np.ones((4, 4))))

    def test_l1_skips_window(self):
        axis = Axis(-1, 1, 10)
        a = CorrelationDensity(axis=axis, values=np.ones(10), epsilon=0.15)
        b = CorrelationDensity(axis=axis, values=np.full(10, 2.0), epsilon=0.15)
        assert l1_distance(a, b) == pytest.approx(8 * 0.2)
