"""Poisson composite likelihood for multitype region-count models.

Because covariates, baseline density and exposure are constant on each
region, the continuous likelihood reduces exactly to independent Poisson
regressions on the region counts with a log-exposure offset.  The
reduced (count-based) form is the computational path; ``direct_loglik``
evaluates the continuous form point by point with exact region
integrals and is kept as an independent cross-check of the reduction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .design import DesignSpec, build_design
from .errors import (
    ClippedPredictorWarning,
    DegenerateFitError,
    InconsistentDataError,
    InputError,
    NonConvergenceError,
    RankDeficientDesignError,
    UnlocatedPointError,
)
from .pattern import MarkedPointPattern, RegionSet, aggregate_counts

_ETA_CLIP = 700.0


@dataclass(frozen=True)
class CompositeModel:
    """Counts, designs and exposures of a multitype Poisson regression.

    ``counts`` is (M, J); ``designs[i]`` is the (J, b_i) matrix of mark
    ``i + 1`` with an all-ones first column; ``nu`` the (J,) exposures.
    Regions with zero exposure must hold zero counts: they contribute
    nothing to the likelihood but stay in the model.
    """

    counts: np.ndarray
    designs: tuple
    nu: np.ndarray
    spec: DesignSpec
    pattern: MarkedPointPattern = None
    regions: RegionSet = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        nu = np.asarray(self.nu, dtype=float).reshape(-1)
        if counts.ndim != 2 or counts.shape[0] != self.spec.M:
            raise InputError("counts must be an (M, J) matrix")
        if np.any(counts < 0):
            raise InputError("counts must be non-negative")
        J = counts.shape[1]
        if nu.size != J or np.any(nu < 0) or not np.all(np.isfinite(nu)):
            raise InputError("exposures must be finite, >= 0, one per region")
        if len(self.designs) != self.spec.M:
            raise InputError("one design matrix per mark is required")
        for i, Z in enumerate(self.designs):
            if Z.shape != (J, self.spec.b[i]):
                raise InputError(f"design of mark {i + 1} must be (J, {self.spec.b[i]})")
            if not np.allclose(Z[:, 0], 1.0):
                raise InputError("the first design column must be the intercept")
        bad = (nu == 0) & (counts.sum(axis=0) > 0)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise InconsistentDataError(
                f"region index {j} has zero population but observed points")
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "nu", nu)

    @property
    def M(self) -> int:
        return self.spec.M

    @property
    def J(self) -> int:
        return self.counts.shape[1]

    @property
    def p(self) -> int:
        return self.spec.p

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())

    def gradient_scale(self) -> float:
        """Normalization for gradient-based convergence checks."""
        return 1.0 + self.total_count


def build_model(pattern: MarkedPointPattern, regions: RegionSet, spec: DesignSpec,
                exposure_scale: float = 1.0, check_coverage: bool = True,
                coverage_tol: float = 1e-3) -> CompositeModel:
    """Aggregate a pattern over regions and assemble the count model."""
    if pattern.mark_count != spec.M:
        raise InputError(
            f"pattern has {pattern.mark_count} marks but the design expects {spec.M}")
    if check_coverage:
        regions.check_coverage(pattern.window, tol=coverage_tol)
    counts = aggregate_counts(pattern, regions)
    dm = build_design(regions, spec, exposure_scale=exposure_scale)
    return CompositeModel(counts=counts, designs=dm.matrices, nu=dm.nu, spec=spec,
                          pattern=pattern, regions=regions)


def _linear_predictors(model: CompositeModel, beta) -> list:
    betas = model.spec.split_by_mark(beta)
    etas = []
    clipped = False
    for i in range(model.M):
        eta = model.designs[i] @ betas[i]
        if np.any(np.abs(eta) > _ETA_CLIP):
            clipped = True
            eta = np.clip(eta, -_ETA_CLIP, _ETA_CLIP)
        etas.append(eta)
    if clipped:
        warnings.warn("linear predictors clipped at +/-700 before exp()",
                      ClippedPredictorWarning, stacklevel=3)
    return etas


def loglik(model: CompositeModel, beta) -> float:
    """Composite log-likelihood in reduced form, up to an additive constant.

    ``sum_ij N_ij eta_ij - nu_j exp(eta_ij)``; the count-weighted
    log-exposure term, free of the coefficients, is dropped.
    """
    etas = _linear_predictors(model, beta)
    out = 0.0
    for i in range(model.M):
        out += float(model.counts[i] @ etas[i] - model.nu @ np.exp(etas[i]))
    return out


def glm_offset_loglik(model: CompositeModel, beta) -> float:
    """Log-likelihood of the offset-form Poisson regressions.

    Equals :func:`loglik` plus ``sum_ij N_ij log nu_j``, the form a GLM
    with canonical log link and offset ``log nu`` maximizes.
    """
    pos = model.nu > 0
    const = float((model.counts[:, pos] * np.log(model.nu[pos])[None, :]).sum())
    return loglik(model, beta) + const


def direct_loglik(pattern: MarkedPointPattern, regions: RegionSet, spec: DesignSpec,
                  beta, exposure_scale: float = 1.0) -> float:
    """Continuous composite log-likelihood, evaluated without count reduction.

    The sum over points evaluates each point's linear predictor at its
    own location; the integral over the window is exact because the
    intensity is constant on each region.  Matches :func:`loglik` by the
    Poisson-regression reduction; both drop the same coefficient-free
    baseline term.
    """
    dm = build_design(regions, spec, exposure_scale=exposure_scale)
    betas = spec.split_by_mark(beta)
    etas = [dm.matrices[i] @ betas[i] for i in range(spec.M)]
    ids = regions.locate_points(pattern.points)
    if np.any(ids < 0):
        raise UnlocatedPointError(pattern.points[np.argmax(ids < 0)])
    idx = regions.index_of_id(ids)
    out = 0.0
    for i in range(spec.M):
        of_mark = pattern.marks == i + 1
        out += float(etas[i][idx[of_mark]].sum())
        out -= float((dm.nu * np.exp(etas[i])).sum())
    return out


def score_and_sensitivity(model: CompositeModel, beta):
    """Score vector and sensitivity matrix of the composite likelihood.

    The sensitivity is block diagonal over marks:
    ``S_i = Z_i' diag(nu exp(eta_i)) Z_i``, positive semidefinite.
    """
    etas = _linear_predictors(model, beta)
    grad = np.empty(model.p)
    S = np.zeros((model.p, model.p))
    for i in range(model.M):
        Z = model.designs[i]
        w = model.nu * np.exp(etas[i])
        sl = model.spec.mark_slice(i)
        grad[sl] = Z.T @ (model.counts[i] - w)
        S[sl, sl] = Z.T @ (Z * w[:, None])
    return grad, S


def mean_count(model: CompositeModel, beta) -> np.ndarray:
    """Expected count per mark under the model at ``beta``."""
    etas = _linear_predictors(model, beta)
    return np.array([float(model.nu @ np.exp(etas[i])) for i in range(model.M)])


def intercept_only_fit(model: CompositeModel) -> np.ndarray:
    """Closed-form fit with every non-intercept coefficient at zero."""
    total_nu = float(model.nu.sum())
    if total_nu <= 0:
        raise DegenerateFitError("all regions have zero exposure")
    beta = np.zeros(model.p)
    for i in range(model.M):
        n_i = model.counts[i].sum()
        if n_i == 0:
            raise DegenerateFitError(f"mark {i + 1} has no points")
        beta[model.spec.mark_offsets[i]] = np.log(n_i / total_nu)
    return beta


def _check_rank(model: CompositeModel, support: np.ndarray):
    pos = model.nu > 0
    for i in range(model.M):
        sl = model.spec.mark_slice(i)
        cols = support[sl]
        Z = model.designs[i][pos][:, cols]
        if Z.shape[1] and np.linalg.matrix_rank(Z) < Z.shape[1]:
            raise RankDeficientDesignError(
                f"design of mark {i + 1} is rank deficient on its support")


def fit_unpenalized(model: CompositeModel, tol: float = 1e-10, max_iter: int = 100,
                    support=None) -> np.ndarray:
    """Maximum composite likelihood fit by Newton with step halving.

    ``support`` restricts the fit to a boolean subset of coefficients
    (the rest stay exactly zero); intercepts are always estimated.
    Convergence requires the max-norm of the score, relative to
    ``1 + total count``, to drop below ``tol``.
    """
    support = np.ones(model.p, bool) if support is None else np.asarray(support, bool).copy()
    if support.size != model.p:
        raise InputError("support mask must have one entry per coefficient")
    support[list(model.spec.intercept_indices)] = True
    _check_rank(model, support)
    scale = model.gradient_scale()

    beta = np.zeros(model.p)
    for i in range(model.M):
        n_i = model.counts[i].sum()
        if n_i == 0:
            raise DegenerateFitError(f"mark {i + 1} has no points")
        if model.nu.sum() > 0:
            beta[model.spec.mark_offsets[i]] = np.log(n_i / model.nu.sum())

    current = loglik(model, beta)
    for _ in range(max_iter):
        grad, S = score_and_sensitivity(model, beta)
        if np.max(np.abs(grad[support])) / scale < tol:
            return beta
        sub = np.flatnonzero(support)
        try:
            delta = np.linalg.solve(S[np.ix_(sub, sub)], grad[sub])
        except np.linalg.LinAlgError:
            raise RankDeficientDesignError(
                "sensitivity matrix singular during Newton step") from None
        step = 1.0
        while step >= 1e-10:
            cand = beta.copy()
            cand[sub] += step * delta
            value = loglik(model, cand)
            if value >= current - 1e-12 * (1 + abs(current)):
                beta, current = cand, value
                break
            step *= 0.5
        else:
            raise NonConvergenceError(max_iter, residual=float(np.max(np.abs(grad))))
    grad, _ = score_and_sensitivity(model, beta)
    resid = float(np.max(np.abs(grad[support])) / scale)
    if resid < tol:
        return beta
    raise NonConvergenceError(max_iter, residual=resid)
