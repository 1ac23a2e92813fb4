"""Multitype spatial point pattern analysis.

Nonparametric intensity and second-order summaries with global envelope
tests, plus sparse-group-lasso penalized Poisson composite likelihood
fitting of multitype intensity models.
"""

from .compositional import alr_inverse, alr_transform, multiplicative_replacement
from .design import (
    AlrStep,
    CoefficientGroup,
    DesignMatrices,
    DesignSpec,
    LogRatioStep,
    build_design,
)
from .envelope import (
    CurveEnsemble,
    EnvelopeResult,
    envelope_test,
    erl_order,
    global_envelope,
)
from .experiments import (
    ExperimentReport,
    consistency_experiment,
    default_scenario,
    selection_experiment,
)
from .fitting import (
    BicPath,
    FitResult,
    SparseGroupIntensityModel,
    SplitSpec,
    bic_path,
    confidence_intervals,
    covariance,
    predict_intensity,
    rasterize_region_values,
    split_pattern,
    two_step_fit,
)
from .geometry import Window
from .intensity import (
    IntensitySurface,
    KernelIntensity,
    adaptive_intensity,
    adaptive_intensity_at_points,
    intensity_at_points,
    kernel_intensity,
    scott_bandwidth,
)
from .likelihood import (
    CompositeModel,
    build_model,
    direct_loglik,
    fit_unpenalized,
    glm_offset_loglik,
    intercept_only_fit,
    loglik,
    mean_count,
    score_and_sensitivity,
)
from .pattern import (
    MarkedPointPattern,
    Region,
    RegionSet,
    aggregate_counts,
    locate_region,
)
from .simulate import (
    RegionIntensity,
    SyntheticScenario,
    simulate_inhom_poisson,
    simulate_scenario,
    stream_rng,
)
from .solver import (
    PenaltyWeights,
    kkt_residual,
    lambda_max,
    make_weights,
    sgl_solve,
    sparse_group_prox,
)
from .summaries import SummaryCurve, center_l, default_r_grid, inhom_cross_k, inhom_k

__all__ = [name for name in dir() if not name.startswith("_")]
