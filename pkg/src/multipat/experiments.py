"""Monte Carlo checks of the estimator's asymptotic behaviour.

Two experiments run the full two-step fit on synthetic data whose true
coefficients are known: the consistency experiment tracks how the
estimation error shrinks as the expected point count grows (the error
should scale like the inverse square root of the mean count), and the
selection experiment tracks how often truly-zero coefficients are
estimated as exact zeros.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from shapely.geometry import box

from .design import DesignSpec
from .errors import InputError, MultipatError, NumericalError
from .fitting import SplitSpec, two_step_fit
from .parallel import parallel_map
from .pattern import Region, RegionSet
from .simulate import SyntheticScenario, simulate_scenario, stream_rng


@dataclass(frozen=True)
class ExperimentReport:
    """Aggregated results of a scaled replication experiment."""

    kind: str
    scales: np.ndarray
    expected_counts: np.ndarray  # mean count mu per scale
    replicates: int
    mean_error: np.ndarray = None  # per scale
    slope: float = None  # d log(error) / d log(mu)
    zero_frequency: np.ndarray = None  # (n_scales, p) exact-zero share
    degenerate: np.ndarray = None  # per scale, count of flagged replicates
    seed: int = 0
    runtime_seconds: float = None

    def zero_frequency_of(self, indices, scale_index: int = -1) -> np.ndarray:
        return self.zero_frequency[scale_index][np.asarray(indices, dtype=int)]


def default_scenario(seed: int = 0, base_count: float = 2500.0,
                     n_side: int = 10) -> SyntheticScenario:
    """Two-mark scenario on a grid of square regions, five true zeros.

    Eleven standardized covariates per mark (smooth spatial fields plus
    seeded noise) in groups of sizes 3, 4 and 4; the baseline density
    varies smoothly.  Intercepts are solved so each mark contributes
    half of ``base_count`` expected points at scale one.
    """
    rng = stream_rng(seed, 90001)
    side = float(n_side)
    centers = (np.arange(n_side) + 0.5)
    gx, gy = np.meshgrid(centers, centers)
    x = gx.ravel() / side
    y = gy.ravel() / side
    J = n_side * n_side

    fields = [
        np.sin(2 * np.pi * x),
        np.cos(2 * np.pi * y),
        x * y,
        np.sin(2 * np.pi * (x + y)),
        np.cos(np.pi * x) * np.sin(np.pi * y),
        (x - 0.5) ** 2,
        (y - 0.5) ** 2,
        np.sin(3 * np.pi * x) * np.cos(np.pi * y),
        x - y,
        np.cos(3 * np.pi * y),
        np.sin(4 * np.pi * x * y),
    ]
    covs = {}
    for k, f in enumerate(fields, start=1):
        v = f + rng.normal(0.0, 0.35, J)
        covs[f"c{k:02d}"] = (v - v.mean()) / v.std()

    density = np.exp(0.3 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
                     + rng.normal(0.0, 0.1, J))

    regions = []
    for j in range(J):
        cx, cy = gx.ravel()[j], gy.ravel()[j]
        poly = box(cx - 0.5, cy - 0.5, cx + 0.5, cy + 0.5)
        regions.append(Region(
            id=j + 1, polygon=poly, density=density[j],
            covariates={name: covs[name][j] for name in covs}))
    region_set = RegionSet(regions)

    names = list(covs)
    spec = DesignSpec.from_groups(
        marks=("1", "2"),
        group_covariates={"g1": names[:3], "g2": names[3:7], "g3": names[7:]},
    )

    # five true zeros exercising both sparsity levels: mark 1 carries two
    # isolated zeros inside active groups, mark 2's first group is
    # entirely inactive
    a = 0.8
    active = {
        "1": [a, -0.875 * a, 0.0, 0.75 * a, -0.6875 * a, 0.875 * a, -0.75 * a,
              0.0, a, -0.875 * a, 0.75 * a],
        "2": [0.0, 0.0, 0.0, 0.75 * a, 0.6875 * a, -0.875 * a, 0.6 * a,
              0.55 * a, -0.75 * a, 0.875 * a, 0.6 * a],
    }
    beta = np.zeros(spec.p)
    from .design import build_design

    dm = build_design(region_set, spec)
    for i, mark in enumerate(spec.marks):
        sl = spec.mark_slice(i)
        vec = np.concatenate([[0.0], active[mark]])
        expected = float((dm.nu * np.exp(dm.matrices[i][:, 1:] @ vec[1:])).sum())
        vec[0] = np.log(base_count / 2.0 / expected)
        beta[sl] = vec
    return SyntheticScenario(regions=region_set, spec=spec, coefficients=beta)


def _run_replicates(scenario, scales, reps, seed, threads, fit_kwargs):
    """two_step_fit on every (scale, replicate); exceptions become flags."""
    scales = np.asarray(scales, dtype=float)
    if np.any(np.diff(scales) <= 0):
        raise InputError("scales must be strictly increasing")

    def one(job):
        s_idx, rep = job
        scaled = scenario.with_scale(scales[s_idx])
        pat = simulate_scenario(scaled, seed=seed, replicate=(s_idx + 1) * 100000 + rep)
        try:
            result = two_step_fit(
                pat, scenario.regions, scenario.spec,
                split=SplitSpec(seed=seed + rep), covariance_mode=None,
                baseline_scale=scaled.scale, **fit_kwargs)
        except (NumericalError, MultipatError):
            return s_idx, None
        if not result.kkt_residual < fit_kwargs.get("tol", 1e-8):
            return s_idx, None
        return s_idx, result.beta

    jobs = [(s, r) for s in range(len(scales)) for r in range(reps)]
    out = parallel_map(one, jobs, threads=threads)
    betas = [[] for _ in scales]
    degenerate = np.zeros(len(scales), dtype=int)
    for s_idx, beta in out:
        if beta is None:
            degenerate[s_idx] += 1
        else:
            betas[s_idx].append(beta)
    return scales, betas, degenerate


def consistency_experiment(scenario: SyntheticScenario, scales=(1.0, 4.0, 16.0),
                           reps: int = 50, seed: int = 0, threads: int = 1,
                           **fit_kwargs) -> ExperimentReport:
    """Estimation error versus expected count; reports the log-log slope.

    Root-mean error should fall like ``mu^(-1/2)``, so the fitted slope
    of ``log(mean error)`` against ``log(mu)`` sits near -0.5.
    Replicates whose fit degenerates (empty marks, no convergence) are
    flagged and excluded rather than crashing the experiment.
    """
    start = time.perf_counter()
    scales, betas, degenerate = _run_replicates(scenario, scales, reps, seed,
                                                threads, fit_kwargs)
    mu = np.array([scenario.with_scale(s).expected_total() for s in scales])
    truth = scenario.coefficients
    mean_error = np.array([
        np.mean([np.linalg.norm(b - truth) for b in bs]) if bs else np.nan
        for bs in betas
    ])
    ok = np.isfinite(mean_error)
    slope = None
    if ok.sum() >= 2:
        slope = float(np.polyfit(np.log(mu[ok]), np.log(mean_error[ok]), 1)[0])
    return ExperimentReport(
        kind="consistency", scales=scales, expected_counts=mu, replicates=reps,
        mean_error=mean_error, slope=slope, degenerate=degenerate, seed=seed,
        runtime_seconds=time.perf_counter() - start)


def selection_experiment(scenario: SyntheticScenario, scales=(1.0, 4.0, 16.0),
                         reps: int = 100, seed: int = 0, threads: int = 1,
                         **fit_kwargs) -> ExperimentReport:
    """Share of exact-zero estimates per coefficient and scale.

    With adaptive weights the truly-zero coefficients should be dropped
    with frequency approaching one as the expected count grows, while
    truly-active coefficients stay selected.
    """
    if not np.any(scenario.coefficients == 0):
        raise InputError("the scenario declares no zero coefficients to track")
    start = time.perf_counter()
    scales, betas, degenerate = _run_replicates(scenario, scales, reps, seed,
                                                threads, fit_kwargs)
    mu = np.array([scenario.with_scale(s).expected_total() for s in scales])
    zero_freq = np.full((len(scales), scenario.spec.p), np.nan)
    for s_idx, bs in enumerate(betas):
        if bs:
            zero_freq[s_idx] = np.mean([b == 0 for b in bs], axis=0)
    return ExperimentReport(
        kind="selection", scales=scales, expected_counts=mu, replicates=reps,
        zero_frequency=zero_freq, degenerate=degenerate, seed=seed,
        runtime_seconds=time.perf_counter() - start)
