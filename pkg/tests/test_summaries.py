"""Inhomogeneous K, cross-K and centered L."""

import math

import numpy as np
import pytest
from shapely.affinity import translate

from multipat.envelope import envelope_test
from multipat.errors import (
    InputError,
    NegativeKValueError,
    NonPositiveIntensityError,
)
from multipat.pattern import MarkedPointPattern
from multipat.simulate import simulate_inhom_poisson, stream_rng
from multipat.summaries import (
    SummaryCurve,
    center_l,
    default_r_grid,
    inhom_cross_k,
    inhom_k,
)


def naive_k(pattern, mark, rho, r):
    """Literal double-loop translation-corrected estimator (oracle)."""
    pts = pattern.points_of_mark(mark)
    poly = pattern.window.polygon
    area = pattern.window.area
    out = np.zeros_like(r)
    for i in range(len(pts)):
        for j in range(len(pts)):
            if i == j:
                continue
            d = math.hypot(pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1])
            if d > r[-1]:
                continue
            ov = poly.intersection(
                translate(poly, pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1])).area
            out += (d <= r) * (area / ov) / (rho[i] * rho[j])
    return out / area


def naive_cross_k(pattern, a, b, rho_a, rho_b, r):
    pts_a = pattern.points_of_mark(a)
    pts_b = pattern.points_of_mark(b)
    poly = pattern.window.polygon
    area = pattern.window.area
    out = np.zeros_like(r)
    for i in range(len(pts_a)):
        for j in range(len(pts_b)):
            d = math.hypot(pts_a[i, 0] - pts_b[j, 0], pts_a[i, 1] - pts_b[j, 1])
            if d > r[-1]:
                continue
            ov = poly.intersection(translate(
                poly, pts_a[i, 0] - pts_b[j, 0], pts_a[i, 1] - pts_b[j, 1])).area
            out += (d <= r) * (area / ov) / (rho_a[i] * rho_b[j])
    return out / area


def poisson_fixture(window, rate, seed, mark=1, mark_count=1):
    rng = stream_rng(seed, 0)
    pts = simulate_inhom_poisson(rate, window, rng=rng)
    return MarkedPointPattern(pts, np.full(len(pts), mark), window,
                              mark_count=mark_count)


class TestSummaryCurve:
    def test_requires_increasing_grid(self):
        with pytest.raises(InputError):
            SummaryCurve(r=[0.0, 0.0, 1.0], value=[0, 0, 0], kind="K")

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            SummaryCurve(r=[0.0, 1.0], value=[0, 0], kind="nope")

    def test_default_grid(self, rect_window):
        r = default_r_grid(rect_window)
        assert r.size == 512
        assert r[0] == 0.0
        assert r[-1] == pytest.approx(0.5)  # quarter of the shorter side


class TestInhomK:
    def test_two_points_zero_below_distance(self, unit_window):
        pat = MarkedPointPattern([[0.2, 0.5], [0.8, 0.5]], [1, 1], unit_window)
        r = np.linspace(0, 0.25, 32)  # all below the pair distance 0.6
        curve = inhom_k(pat, 1, [1.0, 1.0], r_grid=r)
        np.testing.assert_array_equal(curve.value, 0.0)

    def test_matches_naive_double_loop(self, rect_window):
        pat = poisson_fixture(rect_window, 50 / rect_window.area, seed=21)
        rho = np.full(pat.n, pat.n / rect_window.area)
        r = np.linspace(0, 0.5, 64)
        fast = inhom_k(pat, 1, rho, r_grid=r).value
        slow = naive_k(pat, 1, rho, r)
        np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-14)

    def test_matches_naive_on_polygon_window(self, l_window):
        pat = poisson_fixture(l_window, 40 / l_window.area, seed=22)
        rho = np.full(pat.n, pat.n / l_window.area)
        r = np.linspace(0, 0.3, 16)
        fast = inhom_k(pat, 1, rho, r_grid=r).value
        slow = naive_k(pat, 1, rho, r)
        np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-14)

    def test_equals_classical_estimator_for_constant_intensity(self, unit_window):
        pat = poisson_fixture(unit_window, 120.0, seed=23)
        n, area = pat.n, unit_window.area
        r = np.linspace(0, 0.25, 64)
        inhom = inhom_k(pat, 1, np.full(n, n / area), r_grid=r).value
        # classical translation-corrected estimator, written independently
        pts = pat.points
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist, np.inf)
        lam2 = (n / area) ** 2
        classical = np.zeros_like(r)
        keep = dist <= r[-1]
        ov = unit_window.translation_overlap(diff[keep])
        d = dist[keep]
        for t, rt in enumerate(r):
            classical[t] = ((d <= rt) * (area / ov)).sum() / (lam2 * area)
        np.testing.assert_allclose(inhom, classical, rtol=1e-12, atol=1e-14)

    def test_poisson_baseline_within_envelope(self, unit_window):
        pat = poisson_fixture(unit_window, 500.0, seed=123)
        result = envelope_test(pat, 1, n_sims=199, level=0.95,
                               intensity="constant", seed=1000)
        assert not result.rejects

    def test_monotone_nondecreasing(self, unit_window):
        pat = poisson_fixture(unit_window, 80.0, seed=24)
        rho = np.full(pat.n, pat.n)
        curve = inhom_k(pat, 1, rho)
        assert np.all(np.diff(curve.value) >= 0)

    def test_intensity_validation(self, unit_window):
        pat = poisson_fixture(unit_window, 30.0, seed=25)
        with pytest.raises(NonPositiveIntensityError):
            inhom_k(pat, 1, np.zeros(pat.n))
        with pytest.raises(NonPositiveIntensityError):
            inhom_k(pat, 1, np.ones(pat.n + 1))

    def test_border_correction_runs(self, unit_window):
        pat = poisson_fixture(unit_window, 200.0, seed=26)
        rho = np.full(pat.n, pat.n / unit_window.area)
        r = np.linspace(0, 0.2, 32)
        curve = inhom_k(pat, 1, rho, r_grid=r, correction="border")
        # rough Poisson benchmark, generous tolerance
        assert abs(curve.value[-1] - math.pi * 0.2**2) < 0.1


class TestCrossK:
    def test_empty_other_mark_zero_curve(self, unit_window):
        pat = poisson_fixture(unit_window, 50.0, seed=27, mark=1, mark_count=2)
        r = np.linspace(0, 0.2, 16)
        curve = inhom_cross_k(pat, 1, 2, np.full(pat.n, 50.0), [], r_grid=r)
        np.testing.assert_array_equal(curve.value, 0.0)

    def test_matches_naive(self, rect_window):
        rng = stream_rng(31, 0)
        pts_a = simulate_inhom_poisson(25 / rect_window.area, rect_window, rng=rng)
        pts_b = simulate_inhom_poisson(25 / rect_window.area, rect_window, rng=rng)
        pts = np.vstack([pts_a, pts_b])
        marks = np.r_[np.ones(len(pts_a), int), np.full(len(pts_b), 2)]
        pat = MarkedPointPattern(pts, marks, rect_window, mark_count=2)
        rho_a = np.full(len(pts_a), len(pts_a) / rect_window.area)
        rho_b = np.full(len(pts_b), len(pts_b) / rect_window.area)
        r = np.linspace(0, 0.5, 48)
        fast = inhom_cross_k(pat, 1, 2, rho_a, rho_b, r_grid=r).value
        slow = naive_cross_k(pat, 1, 2, rho_a, rho_b, r)
        np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-14)

    def test_independent_marks_within_envelope(self, unit_window):
        rng = stream_rng(32, 0)
        pts_a = simulate_inhom_poisson(150.0, unit_window, rng=rng)
        pts_b = simulate_inhom_poisson(150.0, unit_window, rng=rng)
        pts = np.vstack([pts_a, pts_b])
        marks = np.r_[np.ones(len(pts_a), int), np.full(len(pts_b), 2)]
        pat = MarkedPointPattern(pts, marks, unit_window, mark_count=2)
        result = envelope_test(pat, (1, 2), n_sims=199, level=0.95,
                               intensity="constant", seed=2000)
        assert not result.rejects

    def test_same_mark_rejected(self, unit_window):
        pat = poisson_fixture(unit_window, 30.0, seed=33)
        with pytest.raises(InputError):
            inhom_cross_k(pat, 1, 1, np.ones(pat.n), np.ones(pat.n))


class TestCenterL:
    def test_poisson_k_centers_to_zero(self):
        r = np.linspace(0, 1, 64)
        curve = SummaryCurve(r=r, value=math.pi * r**2, kind="K")
        centered = center_l(curve)
        np.testing.assert_allclose(centered.value, 0.0, atol=1e-14)
        assert centered.kind == "Lcentered"

    def test_scaled_k_gives_linear_value(self):
        r = np.linspace(0, 1, 64)
        curve = SummaryCurve(r=r, value=4 * math.pi * r**2, kind="crossK")
        centered = center_l(curve)
        np.testing.assert_allclose(centered.value, r, atol=1e-14)
        assert centered.kind == "crossLcentered"

    def test_positive_values_flag_clustering(self, unit_window):
        # a tight cluster has centered L > 0 at small r
        rng = np.random.default_rng(5)
        pts = np.clip(rng.normal(0.5, 0.05, size=(80, 2)), 0.01, 0.99)
        pat = MarkedPointPattern(pts, np.ones(80, int), unit_window)
        rho = np.full(80, 80 / unit_window.area)
        centered = center_l(inhom_k(pat, 1, rho, r_grid=np.linspace(0, 0.2, 32)))
        assert centered.value[8:].max() > 0

    def test_negative_k_rejected(self):
        r = np.linspace(0, 1, 8)
        curve = SummaryCurve(r=r, value=np.r_[-1.0, np.ones(7)], kind="K")
        with pytest.raises(NegativeKValueError):
            center_l(curve)

    def test_only_k_kinds_accepted(self):
        r = np.linspace(0, 1, 8)
        curve = SummaryCurve(r=r, value=np.zeros(8), kind="Lcentered")
        with pytest.raises(InputError):
            center_l(curve)
