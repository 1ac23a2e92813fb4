"""Shared fixtures: windows, region fixtures, and a two-mark model."""

import numpy as np
import pytest
from shapely.geometry import Polygon, box

from multipat.design import AlrStep, DesignSpec, LogRatioStep
from multipat.geometry import Window
from multipat.pattern import MarkedPointPattern, Region, RegionSet
from multipat.simulate import SyntheticScenario, simulate_scenario, stream_rng


@pytest.fixture
def unit_window():
    return Window.rectangle(0.0, 0.0, 1.0, 1.0)


@pytest.fixture
def rect_window():
    return Window.rectangle(0.0, 0.0, 3.0, 2.0)


@pytest.fixture
def l_window():
    return Window(Polygon([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]))


def grid_regions(nx, ny, cell=1.0, populations=None, covariates=None, start_id=1):
    """Grid of square regions with optional per-region covariate columns."""
    regions = []
    j = 0
    for iy in range(ny):
        for ix in range(nx):
            covs = {}
            if covariates:
                covs = {name: float(col[j]) for name, col in covariates.items()}
            pop = 1000.0 if populations is None else float(populations[j])
            regions.append(Region(
                id=start_id + j,
                polygon=box(ix * cell, iy * cell, (ix + 1) * cell, (iy + 1) * cell),
                population=pop, covariates=covs))
            j += 1
    return RegionSet(regions)


def build_twenty_regions():
    """5x4 grid carrying plain, compositional and ratio covariates."""
    rng = stream_rng(42, 1)
    J = 20
    shares = rng.dirichlet([5.0, 4.0, 3.0], size=J)
    q1 = rng.uniform(0.2, 0.8, J)
    u1 = rng.uniform(0.3, 0.7, J)
    covs = {
        "elevation": rng.normal(0.0, 1.0, J),
        "wetness": rng.normal(0.0, 1.0, J),
        "slope": rng.normal(0.0, 1.0, J),
        "temp": rng.normal(0.0, 1.0, J),
        "s1": shares[:, 0], "s2": shares[:, 1], "s3": shares[:, 2],
        "q1": q1, "q2": 1.0 - q1,
        "u1": u1, "u2": 1.0 - u1,
    }
    pops = rng.uniform(500.0, 2000.0, J)
    return grid_regions(5, 4, populations=pops, covariates=covs)


def build_paper_shape_spec():
    """Two marks, twelve coefficients each, six groups (3, 3, 4, 4, 4, 4)."""
    groups = {
        "demographic": ["elevation", "log(s1/s3)", "log(s2/s3)"],
        "social": ["wetness", "log(q1/q2)", "s1", "s2"],
        "economic": ["q1", "slope", "temp", "log(u1/u2)"],
    }
    transforms = (
        AlrStep(components=("s1", "s2", "s3"), reference="s3"),
        LogRatioStep(numerator="q1", denominator="q2"),
        LogRatioStep(numerator="u1", denominator="u2"),
    )
    return DesignSpec.from_groups(("1", "2"), groups, transforms=transforms)


def build_small_scenario():
    """Two-mark scenario on the 20-region fixture, ~800 expected points."""
    regions = build_twenty_regions()
    spec = build_paper_shape_spec()
    rng = stream_rng(7, 2)
    beta = np.zeros(spec.p)
    for i in range(2):
        sl = spec.mark_slice(i)
        vec = rng.normal(0.0, 0.15, spec.b[i])
        vec[0] = 0.0
        beta[sl] = vec
    scenario = SyntheticScenario(regions=regions, spec=spec, coefficients=beta)
    mu = scenario.expected_total()
    for i in range(2):
        beta[spec.mark_offsets[i]] = np.log(400.0 / (mu / 2.0))
    return SyntheticScenario(regions=regions, spec=spec, coefficients=beta)


@pytest.fixture
def twenty_regions():
    return build_twenty_regions()


@pytest.fixture
def paper_shape_spec():
    return build_paper_shape_spec()


@pytest.fixture
def small_scenario():
    return build_small_scenario()


@pytest.fixture
def small_pattern(small_scenario):
    return simulate_scenario(small_scenario, seed=11)


@pytest.fixture
def small_model(small_pattern, small_scenario):
    from multipat.likelihood import build_model

    return build_model(small_pattern, small_scenario.regions, small_scenario.spec)


def homogeneous_pattern(window, rate, seed, mark_count=1):
    from multipat.simulate import simulate_inhom_poisson

    rng = stream_rng(seed, 0)
    pts = simulate_inhom_poisson(float(rate), window, rng=rng)
    return MarkedPointPattern(pts, np.ones(len(pts), dtype=int), window,
                              mark_count=mark_count)
