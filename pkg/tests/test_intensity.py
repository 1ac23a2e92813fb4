"""Kernel intensity estimation, fixed and adaptive."""

import math

import numpy as np
import pytest
from scipy.stats import norm
from sklearn.base import clone

from multipat.errors import (
    DegeneratePilotError,
    InputError,
    NonPositiveBandwidthError,
)
from multipat.intensity import (
    KernelIntensity,
    _adaptive_bandwidths,
    _correction_raster,
    adaptive_intensity,
    adaptive_intensity_at_points,
    intensity_at_points,
    kernel_intensity,
    scott_bandwidth,
)
from multipat.pattern import MarkedPointPattern

from conftest import homogeneous_pattern


class TestKernelIntensity:
    def test_empty_pattern_zero_surface(self, unit_window):
        pat = MarkedPointPattern(np.empty((0, 2)), [], unit_window, mark_count=1)
        surf = kernel_intensity(pat, 1, bandwidth=0.1)
        assert surf.integral() == 0.0
        assert surf.max_value() == 0.0

    def test_single_point_peak_value(self, unit_window):
        pat = MarkedPointPattern([[0.5, 0.5]], [1], unit_window)
        h = 0.05
        surf = kernel_intensity(pat, 1, bandwidth=h, grid=(256, 256))
        peak = surf.value_at([[0.5, 0.5]])[0]
        assert peak == pytest.approx(1.0 / (2 * math.pi * h * h), rel=0.01)

    def test_mass_preservation_homogeneous(self, unit_window):
        pat = homogeneous_pattern(unit_window, 200.0, seed=3)
        surf = kernel_intensity(pat, 1, bandwidth=0.05, grid=(256, 256))
        assert abs(surf.integral() - pat.n) <= 0.02 * pat.n

    def test_mass_within_five_percent_various_bandwidths(self, rect_window):
        pat = homogeneous_pattern(rect_window, 60.0, seed=4)
        for h in (0.05, 0.1, 0.2):
            surf = kernel_intensity(pat, 1, bandwidth=h, grid=(256, 256))
            assert 0.95 * pat.n <= surf.integral() <= 1.05 * pat.n

    def test_nonpositive_bandwidth(self, unit_window):
        pat = MarkedPointPattern([[0.5, 0.5]], [1], unit_window)
        with pytest.raises(NonPositiveBandwidthError):
            kernel_intensity(pat, 1, bandwidth=0.0)
        with pytest.raises(NonPositiveBandwidthError):
            intensity_at_points(pat, 1, bandwidth=-1.0)

    def test_correction_raster_matches_analytic_rectangle(self, unit_window):
        h = 0.1
        raster = unit_window.raster((128, 128))
        got = _correction_raster(raster, h)

        def analytic(x, y):
            return ((norm.cdf((1 - x) / h) - norm.cdf(-x / h))
                    * (norm.cdf((1 - y) / h) - norm.cdf(-y / h)))

        for ix, iy in [(64, 64), (0, 64), (5, 5), (127, 0)]:
            x, y = raster.xs[ix], raster.ys[iy]
            assert got[iy, ix] == pytest.approx(analytic(x, y), rel=2e-3)

    def test_intensity_at_points_leave_one_out(self, unit_window):
        pat = homogeneous_pattern(unit_window, 100.0, seed=5)
        with_self = intensity_at_points(pat, 1, bandwidth=0.08, leave_one_out=False)
        loo = intensity_at_points(pat, 1, bandwidth=0.08, leave_one_out=True)
        assert np.all(loo < with_self)


class TestAdaptiveIntensity:
    def test_homogeneous_bandwidths_near_pilot(self, unit_window):
        # regular grid: pilot is nearly flat so the rule returns ~pilot
        g = (np.arange(20) + 0.5) / 20
        gx, gy = np.meshgrid(g, g)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        pat = MarkedPointPattern(pts, np.ones(len(pts), int), unit_window)
        _, h, _ = _adaptive_bandwidths(pat, 1, 0.15, (16, 16), (128, 128))
        assert np.all(np.abs(h / 0.15 - 1.0) < 0.2)

    def test_dense_cluster_gets_smaller_bandwidth(self, unit_window):
        rng = np.random.default_rng(12)
        dense = rng.normal([0.25, 0.5], 0.03, size=(150, 2))
        sparse = rng.normal([0.75, 0.5], 0.09, size=(25, 2))
        pts = np.clip(np.vstack([dense, sparse]), 0.001, 0.999)
        pat = MarkedPointPattern(pts, np.ones(len(pts), int), unit_window)
        _, h, _ = _adaptive_bandwidths(pat, 1, 0.1, (16, 16), (128, 128))
        assert h[:150].mean() < h[150:].mean()

    def test_degenerate_pilot_raises(self, rect_window):
        # far outlier with a tiny pilot: the pilot underflows to zero on
        # the outlier's bandwidth cell
        pat = MarkedPointPattern([[0.1, 0.1], [2.9, 1.9]], [1, 1], rect_window)
        with pytest.raises(DegeneratePilotError):
            adaptive_intensity(pat, 1, pilot_bandwidth=1e-4, grid=(64, 64))

    def test_adaptive_mass_preserved(self, unit_window):
        pat = homogeneous_pattern(unit_window, 200.0, seed=3)
        surf = adaptive_intensity(pat, 1, pilot_bandwidth=0.08, grid=(128, 128))
        assert 0.95 * pat.n <= surf.integral() <= 1.05 * pat.n

    def test_at_points_positive(self, unit_window):
        pat = homogeneous_pattern(unit_window, 150.0, seed=6)
        vals = adaptive_intensity_at_points(pat, 1, pilot_bandwidth=0.1,
                                            grid=(128, 128))
        assert vals.shape == (pat.n,)
        assert np.all(vals > 0)


class TestScottBandwidth:
    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(0, 1, size=(400, 2))
        assert scott_bandwidth(10 * pts) == pytest.approx(10 * scott_bandwidth(pts))

    def test_needs_two_points(self):
        with pytest.raises(InputError):
            scott_bandwidth([[0.0, 0.0]])


class TestEstimator:
    def test_fit_predict(self, unit_window):
        pat = homogeneous_pattern(unit_window, 100.0, seed=7)
        est = KernelIntensity(bandwidth=0.1, grid=(64, 64)).fit(pat, mark=1)
        vals = est.predict([[0.5, 0.5], [0.1, 0.9]])
        assert vals.shape == (2,) and np.all(vals >= 0)

    def test_get_params_and_clone(self):
        est = KernelIntensity(bandwidth=0.2, adaptive=True)
        params = est.get_params()
        assert params["bandwidth"] == 0.2 and params["adaptive"] is True
        clone(est)  # sklearn-compatible construction

    def test_predict_before_fit_raises(self):
        with pytest.raises(InputError):
            KernelIntensity().predict([[0.0, 0.0]])
