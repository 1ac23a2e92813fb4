"""Global envelope tests ordered by extreme rank length (ERL).

For every curve and grid point the two-sided pointwise rank is the
smaller of the ranks from below and from above among all curves at that
point (ties share the minimum rank).  A curve's ERL vector is its
pointwise ranks sorted increasingly; curves compare lexicographically,
smaller meaning more extreme.  The ``100*level%`` envelope is the
pointwise min/max of the curves left after discarding the most extreme
ones, never discarding more than a fraction ``1 - level``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    GridMismatchError,
    InputError,
    TooFewSimulationsError,
)
from .intensity import (
    adaptive_intensity,
    adaptive_intensity_at_points,
)
from .parallel import parallel_map
from .pattern import MarkedPointPattern
from .simulate import simulate_inhom_poisson, stream_rng
from .summaries import center_l, default_r_grid, inhom_cross_k, inhom_k


@dataclass(frozen=True)
class CurveEnsemble:
    """Observed curve plus simulated null curves on a common grid."""

    r: np.ndarray  # (T,)
    observed: np.ndarray  # (T,)
    simulated: np.ndarray  # (s, T)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).reshape(-1)
        obs = np.asarray(self.observed, dtype=float).reshape(-1)
        sims = np.atleast_2d(np.asarray(self.simulated, dtype=float))
        if obs.shape != r.shape or sims.shape[1] != r.size:
            raise GridMismatchError("curves do not share the distance grid")
        if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(sims))):
            raise InputError("ensemble curves must be finite")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "simulated", sims)

    @property
    def n_sims(self) -> int:
        return self.simulated.shape[0]

    def stacked(self) -> np.ndarray:
        """All curves with the observed one in row 0."""
        return np.vstack([self.observed[None, :], self.simulated])


@dataclass(frozen=True)
class EnvelopeResult:
    """Global envelope bounds with the pointwise significance mask."""

    r: np.ndarray
    observed: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    significant: np.ndarray
    p_interval: tuple
    level: float

    @property
    def rejects(self) -> bool:
        return bool(self.significant.any())


def _pointwise_ranks(curves: np.ndarray) -> np.ndarray:
    """Two-sided pointwise ranks, ties sharing the minimum rank."""
    m, T = curves.shape
    below = np.empty((m, T), dtype=np.int64)
    above = np.empty((m, T), dtype=np.int64)
    srt = np.sort(curves, axis=0)
    for t in range(T):
        below[:, t] = np.searchsorted(srt[:, t], curves[:, t], side="left")
        above[:, t] = m - np.searchsorted(srt[:, t], curves[:, t], side="right")
    return np.minimum(below, above) + 1


def erl_order(curves, alternative: str = "two-sided") -> np.ndarray:
    """Competition rank of each curve, 1 = most extreme.

    ``curves`` is the (s+1, T) stack including the observed curve, or a
    :class:`CurveEnsemble`.  Curves with identical ERL vectors share a
    rank, and a curve's rank always equals one plus the number of curves
    strictly more extreme than it.
    """
    if alternative != "two-sided":
        raise InputError("only the two-sided alternative is implemented")
    if isinstance(curves, CurveEnsemble):
        curves = curves.stacked()
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    m = curves.shape[0]
    if m < 2:
        raise InputError("need at least two curves to rank")
    erl = np.sort(_pointwise_ranks(curves), axis=1)
    order = np.lexsort(erl[:, ::-1].T)  # lexicographic, most extreme first
    ranks = np.empty(m, dtype=np.int64)
    rank = 1
    for pos, idx in enumerate(order):
        if pos > 0 and not np.array_equal(erl[idx], erl[order[pos - 1]]):
            rank = pos + 1
        ranks[idx] = rank
    return ranks


def global_envelope(ensemble: CurveEnsemble, level: float = 0.95) -> EnvelopeResult:
    """ERL global envelope and p-value interval for the observed curve.

    Needs at least ``ceil(1/(1-level)) - 1`` simulations.  The envelope
    is the pointwise min/max over all curves except the ``k_alpha`` most
    extreme, where ``k_alpha`` is the largest cutoff whose discarded
    fraction stays within ``1 - level`` (ties count fully toward
    extremeness, so tied blocks are kept rather than over-discarded).
    """
    if not 0 < level < 1:
        raise InputError("level must lie in (0, 1)")
    s = ensemble.n_sims
    s_min = math.ceil(1.0 / (1.0 - level)) - 1
    if s < s_min:
        raise TooFewSimulationsError(
            f"{s} simulations cannot support a {level:.0%} envelope (need >= {s_min})")
    m = s + 1
    ranks = erl_order(ensemble)
    alpha_count = (1.0 - level) * m
    cutoff = 1
    for cand in range(1, m + 2):
        if (ranks < cand).sum() <= alpha_count:
            cutoff = cand
    keep = ranks >= cutoff
    curves = ensemble.stacked()
    lower = curves[keep].min(axis=0)
    upper = curves[keep].max(axis=0)
    obs = ensemble.observed
    significant = (obs < lower) | (obs > upper)
    obs_rank = ranks[0]
    sims_rank = ranks[1:]
    p_lower = ((sims_rank < obs_rank).sum() + 1) / m
    p_upper = ((sims_rank <= obs_rank).sum() + 1) / m
    return EnvelopeResult(r=ensemble.r, observed=obs, lower=lower, upper=upper,
                          significant=significant,
                          p_interval=(float(p_lower), float(p_upper)),
                          level=float(level))


# ----------------------------------------------------------------------
# end-to-end test for centered L / cross-L statistics
# ----------------------------------------------------------------------


def _rho_for(pattern, mark, mode, pilot_bandwidth, grid, bw_grid):
    pts = pattern.points_of_mark(mark)
    if mode == "constant":
        lam = len(pts) / pattern.window.area
        return np.full(len(pts), lam), lam
    values = adaptive_intensity_at_points(
        pattern, mark=mark, pilot_bandwidth=pilot_bandwidth, bw_grid=bw_grid,
        grid=grid)
    surface = adaptive_intensity(
        pattern, mark=mark, pilot_bandwidth=pilot_bandwidth, bw_grid=bw_grid,
        grid=grid)
    return np.maximum(values, 1e-300), surface


def _statistic(pattern, marks, rhos, r, correction):
    if len(marks) == 1:
        k = inhom_k(pattern, marks[0], rhos[0], r_grid=r, correction=correction)
    else:
        k = inhom_cross_k(pattern, marks[0], marks[1], rhos[0], rhos[1],
                          r_grid=r, correction=correction)
    return center_l(k).value


def envelope_test(pattern: MarkedPointPattern, marks, n_sims: int = 999,
                  level: float = 0.95, r_grid=None, intensity: str = "adaptive",
                  pilot_bandwidth=None, grid=(256, 256), bw_grid=(16, 16),
                  reestimate: bool = True, correction: str = "translation",
                  seed: int = 0, threads: int = 1) -> EnvelopeResult:
    """Global envelope test of the inhomogeneous-Poisson null.

    ``marks`` is one mark (centered L) or a pair (centered cross-L).
    The null intensity of each involved mark is estimated from the
    observed pattern (``intensity`` = "adaptive" or "constant"), null
    patterns are simulated from it, and by default the intensity is
    re-estimated on every simulated pattern exactly as on the observed
    one; ``reestimate=False`` reuses the observed-data intensity.
    """
    marks = (marks,) if np.isscalar(marks) else tuple(marks)
    if len(marks) not in (1, 2):
        raise InputError("marks must name one mark or a pair")
    if intensity not in ("adaptive", "constant"):
        raise InputError(f"unknown intensity mode {intensity!r}")
    window = pattern.window
    r = default_r_grid(window) if r_grid is None else np.asarray(r_grid, dtype=float)

    obs_rho = {}
    null_model = {}
    for mk in marks:
        values, source = _rho_for(pattern, mk, intensity, pilot_bandwidth, grid, bw_grid)
        obs_rho[mk] = values
        null_model[mk] = source
    observed = _statistic(pattern, marks, [obs_rho[mk] for mk in marks], r, correction)

    def one_sim(k: int) -> np.ndarray:
        rhos = []
        sim_pts = {}
        for mk in marks:
            rng = stream_rng(seed, k, mk)
            sim_pts[mk] = simulate_inhom_poisson(null_model[mk], window, rng=rng)
        pts = np.vstack([sim_pts[mk] for mk in marks])
        mks = np.concatenate([np.full(len(sim_pts[mk]), mk, dtype=int) for mk in marks])
        sim_pat = MarkedPointPattern(pts, mks, window, mark_count=pattern.mark_count)
        for mk in marks:
            if reestimate:
                values, _ = _rho_for(sim_pat, mk, intensity, pilot_bandwidth, grid,
                                     bw_grid)
            elif intensity == "constant":
                values = np.full(len(sim_pts[mk]), float(obs_rho[mk][0])
                                 if len(obs_rho[mk]) else 0.0)
            else:
                values = np.maximum(null_model[mk].value_at(sim_pts[mk]), 1e-300)
            rhos.append(values)
        return _statistic(sim_pat, marks, rhos, r, correction)

    sims = parallel_map(one_sim, range(n_sims), threads=threads)
    ensemble = CurveEnsemble(r=r, observed=observed, simulated=np.array(sims))
    return global_envelope(ensemble, level=level)
