"""Monte Carlo validation experiments (small, fast configurations)."""

import numpy as np
import pytest

from multipat.errors import InputError
from multipat.experiments import (
    consistency_experiment,
    default_scenario,
    selection_experiment,
)


@pytest.fixture(scope="module")
def scenario():
    return default_scenario(seed=0)


class TestDefaultScenario:
    def test_paper_shaped(self, scenario):
        spec = scenario.spec
        assert spec.M == 2 and spec.p == 24
        assert sorted(len(g.indices) for g in spec.groups) == [3, 3, 4, 4, 4, 4]
        assert scenario.regions.J == 100
        assert int((scenario.coefficients == 0).sum()) == 5
        assert scenario.expected_total() == pytest.approx(2500.0, rel=1e-9)

    def test_deterministic(self):
        a = default_scenario(seed=3)
        b = default_scenario(seed=3)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)
        np.testing.assert_array_equal(a.regions.populations, b.regions.populations)


class TestConsistencyExperiment:
    def test_small_run_structure(self, scenario):
        report = consistency_experiment(scenario, scales=(1.0, 4.0), reps=4, seed=1)
        assert report.kind == "consistency"
        assert report.mean_error.shape == (2,)
        assert np.all(np.isfinite(report.mean_error))
        assert report.mean_error[1] < report.mean_error[0]
        assert report.slope < 0
        assert report.degenerate.tolist() == [0, 0]

    def test_deterministic_given_seed(self, scenario):
        a = consistency_experiment(scenario, scales=(1.0, 2.0), reps=3, seed=2)
        b = consistency_experiment(scenario, scales=(1.0, 2.0), reps=3, seed=2)
        np.testing.assert_array_equal(a.mean_error, b.mean_error)
        assert a.slope == b.slope

    def test_zero_scale_flags_degenerate_fits(self, scenario):
        report = consistency_experiment(scenario, scales=(0.0, 1.0), reps=3, seed=3)
        assert report.degenerate[0] == 3  # empty patterns cannot be fit
        assert np.isnan(report.mean_error[0])
        assert np.isfinite(report.mean_error[1])

    def test_scales_must_increase(self, scenario):
        with pytest.raises(InputError):
            consistency_experiment(scenario, scales=(4.0, 1.0), reps=2)

    def test_threads_do_not_change_report(self, scenario):
        a = consistency_experiment(scenario, scales=(1.0, 2.0), reps=3, seed=4,
                                   threads=1)
        b = consistency_experiment(scenario, scales=(1.0, 2.0), reps=3, seed=4,
                                   threads=3)
        np.testing.assert_array_equal(a.mean_error, b.mean_error)


class TestSelectionExperiment:
    def test_small_run_structure(self, scenario):
        report = selection_experiment(scenario, scales=(1.0, 4.0), reps=4, seed=5)
        assert report.kind == "selection"
        assert report.zero_frequency.shape == (2, scenario.spec.p)
        zeros = scenario.coefficients == 0
        assert np.all(report.zero_frequency[:, zeros] >= 0)
        # intercepts are never dropped
        assert np.all(report.zero_frequency[:, list(scenario.spec.intercept_indices)] == 0)

    def test_requires_declared_zeros(self, scenario):
        from dataclasses import replace

        no_zeros = replace(scenario,
                           coefficients=np.where(scenario.coefficients == 0, 0.1,
                                                 scenario.coefficients))
        with pytest.raises(InputError):
            selection_experiment(no_zeros, reps=2)

    def test_zero_frequency_of_helper(self, scenario):
        report = selection_experiment(scenario, scales=(1.0, 2.0), reps=3, seed=6)
        zeros = np.flatnonzero(scenario.coefficients == 0)
        vals = report.zero_frequency_of(zeros, scale_index=-1)
        assert vals.shape == zeros.shape
