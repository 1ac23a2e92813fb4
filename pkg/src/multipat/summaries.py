"""Second-order summaries: inhomogeneous K, cross-K and centered L.

Pairs are reweighted by the reciprocal product of intensities at the
two points, so a Poisson process of any (positive) intensity has
``K(r) = pi r^2``.  The default edge correction is the translation
correction ``area / |W intersect W_shifted|``; a border correction
(restricting the first point to lie deeper than r from the boundary) is
also available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NegativeKValueError, NonPositiveIntensityError
from .pattern import MarkedPointPattern

CURVE_KINDS = ("K", "crossK", "Lcentered", "crossLcentered")


@dataclass(frozen=True)
class SummaryCurve:
    """A summary function sampled on an increasing grid of distances."""

    r: np.ndarray
    value: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise InputError(f"unknown curve kind {self.kind!r}")
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.value, dtype=float)
        if r.ndim != 1 or v.shape != r.shape:
            raise InputError("r and value must be equal-length vectors")
        if r.size < 2 or np.any(np.diff(r) <= 0):
            raise InputError("r must be strictly increasing")
        if r[0] < 0:
            raise InputError("distances must be non-negative")
        if not np.all(np.isfinite(v)):
            raise InputError("curve values must be finite")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "value", v)


def default_r_grid(window, n_steps: int = 512, r_max=None) -> np.ndarray:
    """Distance grid from 0 to a quarter of the shorter window side."""
    if r_max is None:
        r_max = window.shorter_side / 4.0
    if not r_max > 0:
        raise InputError("r_max must be positive")
    return np.linspace(0.0, float(r_max), int(n_steps))


def _check_intensity(rho, n, label):
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.size != n:
        raise NonPositiveIntensityError(
            f"{label}: expected {n} intensity values, got {rho.size}")
    if rho.size and (np.any(rho <= 0) or not np.all(np.isfinite(rho))):
        raise NonPositiveIntensityError(f"{label}: intensities must be finite and > 0")
    return rho


def _cumulative_pair_curve(window, pts_a, pts_b, rho_a, rho_b, r, same, correction):
    """Sum of reweighted pair indicators, cumulated over the r grid."""
    r = np.asarray(r, dtype=float)
    r_max = r[-1]
    if len(pts_a) == 0 or len(pts_b) == 0:
        return np.zeros_like(r)
    diff = pts_a[:, None, :] - pts_b[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    if same:
        np.fill_diagonal(dist, np.inf)
    inv = 1.0 / np.multiply.outer(rho_a, rho_b)

    if correction == "translation":
        keep = dist <= r_max
        if not np.any(keep):
            return np.zeros_like(r)
        weights = inv[keep] * window.area / window.translation_overlap(diff[keep])
        bins = np.searchsorted(r, dist[keep], side="left")
        acc = np.zeros(r.size + 1)
        np.add.at(acc, bins, weights)
        return np.cumsum(acc)[: r.size] / window.area

    if correction == "border":
        # first point restricted to the r-eroded window; the reciprocal-
        # intensity sum over retained points estimates the eroded area
        bdist = window.boundary_distance(pts_a)
        keep = dist <= r_max
        bins_pair = np.searchsorted(r, dist, side="left")
        out = np.zeros_like(r)
        for t, rt in enumerate(r):
            rows = bdist >= rt
            if not np.any(rows):
                out[t] = 0.0
                continue
            denom = (1.0 / rho_a[rows]).sum()
            num = (inv[rows] * (bins_pair[rows] <= t) * keep[rows]).sum()
            out[t] = num / denom if denom > 0 else 0.0
        return out

    raise InputError(f"unknown edge correction {correction!r}")


def inhom_k(pattern: MarkedPointPattern, mark: int, rho_at_points, r_grid=None,
            correction: str = "translation") -> SummaryCurve:
    """Inhomogeneous K function for the points of one mark.

    ``rho_at_points`` holds the (strictly positive) intensity at each
    point of the mark, e.g. from
    :func:`multipat.intensity.intensity_at_points`.
    """
    pts = pattern.points_of_mark(mark)
    rho = _check_intensity(rho_at_points, len(pts), f"mark {mark}")
    r = default_r_grid(pattern.window) if r_grid is None else np.asarray(r_grid, float)
    value = _cumulative_pair_curve(pattern.window, pts, pts, rho, rho, r,
                                   same=True, correction=correction)
    return SummaryCurve(r=r, value=value, kind="K")


def inhom_cross_k(pattern: MarkedPointPattern, mark_a: int, mark_b: int,
                  rho_a, rho_b, r_grid=None,
                  correction: str = "translation") -> SummaryCurve:
    """Inhomogeneous cross-K between the points of two marks."""
    if mark_a == mark_b:
        raise InputError("cross-K needs two distinct marks")
    pts_a = pattern.points_of_mark(mark_a)
    pts_b = pattern.points_of_mark(mark_b)
    ra = _check_intensity(rho_a, len(pts_a), f"mark {mark_a}")
    rb = _check_intensity(rho_b, len(pts_b), f"mark {mark_b}")
    r = default_r_grid(pattern.window) if r_grid is None else np.asarray(r_grid, float)
    value = _cumulative_pair_curve(pattern.window, pts_a, pts_b, ra, rb, r,
                                   same=False, correction=correction)
    return SummaryCurve(r=r, value=value, kind="crossK")


def center_l(curve: SummaryCurve) -> SummaryCurve:
    """Centered L transform ``sqrt(K/pi) - r`` of a K or cross-K curve.

    Positive values flag clustering, negative values repulsion.
    """
    if curve.kind not in ("K", "crossK"):
        raise InputError(f"can only center a K curve, got kind {curve.kind!r}")
    if np.any(curve.value < 0):
        raise NegativeKValueError("K values must be non-negative")
    kind = "Lcentered" if curve.kind == "K" else "crossLcentered"
    return SummaryCurve(r=curve.r, value=np.sqrt(curve.value / math.pi) - curve.r,
                        kind=kind)
