"""Additive log-ratio transform for compositional covariates.

A composition is a vector of positive shares summing to one.  The alr
transform maps it to unconstrained log-ratios against a reference
component, which is how proportion-type covariates enter the intensity
designs.
"""

from __future__ import annotations

import numpy as np

from .errors import NonPositiveComponentError, SumOutOfToleranceError

SUM_TOLERANCE = 1e-6


def _as_composition(props) -> np.ndarray:
    p = np.asarray(props, dtype=float).reshape(-1)
    if p.size < 2:
        raise SumOutOfToleranceError("a composition needs at least two components")
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise NonPositiveComponentError(
            "all composition components must be strictly positive"
        )
    total = p.sum()
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise SumOutOfToleranceError(
            f"composition sums to {total!r}, outside 1 +/- {SUM_TOLERANCE}"
        )
    return p / total


def alr_transform(props, ref: int = -1) -> np.ndarray:
    """Log-ratios ``log(props[k] / props[ref])`` for ``k != ref``.

    The input order of the non-reference components is preserved.
    Shares must be strictly positive and sum to one within 1e-6 (they
    are renormalized inside that tolerance).

    >>> alr_transform([1/3, 1/3, 1/3], ref=2)
    array([0., 0.])
    """
    p = _as_composition(props)
    ref = int(np.arange(p.size)[ref])  # normalize negative indices
    keep = np.arange(p.size) != ref
    return np.log(p[keep] / p[ref])


def alr_inverse(logratios, ref: int = -1) -> np.ndarray:
    """Composition whose alr transform (same reference) is ``logratios``."""
    lr = np.asarray(logratios, dtype=float).reshape(-1)
    k = lr.size + 1
    ref = int(np.arange(k)[ref])
    full = np.empty(k)
    full[np.arange(k) != ref] = lr
    full[ref] = 0.0
    e = np.exp(full - full.max())
    return e / e.sum()


def multiplicative_replacement(props, eps: float | None = None) -> np.ndarray:
    """Replace zero shares by a small value and renormalize.

    ``eps`` defaults to half the smallest strictly positive share.  This
    is an explicit, opt-in imputation for compositions with structural
    zeros; the transforms themselves treat zeros as errors.
    """
    p = np.asarray(props, dtype=float).reshape(-1)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise NonPositiveComponentError("shares must be finite and non-negative")
    if not np.any(p > 0):
        raise NonPositiveComponentError("at least one share must be positive")
    if eps is None:
        eps = 0.5 * p[p > 0].min()
    out = np.where(p == 0, eps, p)
    return out / out.sum()
