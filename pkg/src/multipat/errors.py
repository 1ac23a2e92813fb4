"""Exception hierarchy shared across the package.

Two branches matter for the CLI: ``InputError`` (bad files, bad
configuration, inconsistent data -- exit code 1) and ``NumericalError``
(estimation failed -- exit code 2).
"""


class MultipatError(Exception):
    """Base class for all package errors."""


class InputError(MultipatError):
    """Invalid input data or configuration."""


class NumericalError(MultipatError):
    """A numerical procedure failed to produce a valid result."""


# -- data model ---------------------------------------------------------


class NonPositiveComponentError(InputError):
    """A compositional vector contains a zero or negative share."""


class SumOutOfToleranceError(InputError):
    """Compositional shares do not sum to one within tolerance."""


class UnlocatedPointError(InputError):
    """A point falls in no region of the region set.

    The offending coordinates are stored in ``point``.
    """

    def __init__(self, point, message=None):
        self.point = tuple(float(c) for c in point)
        super().__init__(message or f"point {self.point} lies in no region")


class MissingCovariateError(InputError):
    """A covariate requested by the design is absent from the regions."""


class InconsistentDataError(InputError):
    """Observed points contradict the exposure data (zero-population region)."""


class ConfigError(InputError):
    """A configuration file or CLI argument set cannot be interpreted."""


# -- nonparametric estimation ------------------------------------------


class NonPositiveBandwidthError(InputError):
    """Kernel bandwidth must be strictly positive."""


class DegeneratePilotError(NumericalError):
    """The pilot intensity estimate vanishes at a data point."""


class NonPositiveIntensityError(InputError):
    """Intensity values at data points must be strictly positive."""


class NegativeKValueError(InputError):
    """A K-function curve contains negative values."""


# -- simulation and envelopes ------------------------------------------


class UnboundedIntensityError(InputError):
    """The intensity has no finite maximum, so thinning cannot run."""


class GridMismatchError(InputError):
    """Curves in an ensemble do not share the same distance grid."""


class TooFewSimulationsError(InputError):
    """Not enough null simulations for the requested envelope level."""


# -- fitting ------------------------------------------------------------


class RankDeficientDesignError(NumericalError):
    """The design matrix is rank deficient on positive-exposure regions."""


class DegenerateFitError(NumericalError):
    """The likelihood has no finite maximizer (e.g. a mark with no points)."""


class NonConvergenceError(NumericalError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, max_iter, residual=None):
        self.max_iter = max_iter
        self.residual = residual
        msg = f"no convergence after {max_iter} iterations"
        if residual is not None:
            msg += f" (residual {residual:.3e})"
        super().__init__(msg)


class SingularSensitivityError(NumericalError):
    """The sensitivity matrix is singular on the requested support."""


class ClippedPredictorWarning(UserWarning):
    """Linear predictors were clipped to avoid overflow in exp()."""
