"""Acceptance suite: one test per criterion, stated tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS lines.  Each test asserts both the statistical target and its runtime
budget.
"""

import json
import time

import numpy as np
import pytest

from multipat.cli import main as cli_main
from multipat.envelope import envelope_test
from multipat.experiments import (
    consistency_experiment,
    default_scenario,
    selection_experiment,
)
from multipat.fitting import confidence_intervals, covariance
from multipat.geometry import Window
from multipat.likelihood import (
    build_model,
    direct_loglik,
    fit_unpenalized,
    glm_offset_loglik,
    loglik,
    score_and_sensitivity,
)
from multipat.pattern import MarkedPointPattern
from multipat.simulate import simulate_inhom_poisson, simulate_scenario, stream_rng
from multipat.solver import sgl_solve
from multipat.summaries import inhom_cross_k, inhom_k

from conftest import build_small_scenario
from reference_solvers import projected_subgradient_sgl, random_sgl_instance
from test_summaries import naive_cross_k, naive_k


def _report(number, name):
    print(f"\n[ACCEPTANCE] criterion {number} ({name}): PASS")


@pytest.fixture(scope="module")
def scenario():
    return default_scenario(seed=0)


@pytest.fixture(scope="module")
def small_scenario_module():
    return build_small_scenario()


def test_criterion_1_proposition_equivalence(small_scenario_module):
    """GLM-form and direct-integral likelihoods differ by -sum N log nu."""
    scenario = small_scenario_module
    pattern = simulate_scenario(scenario, seed=11)
    model = build_model(pattern, scenario.regions, scenario.spec)
    assert model.J == 20
    const = float((model.counts * np.log(model.nu)[None, :]).sum())
    rng = stream_rng(101, 0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        beta = rng.normal(0.0, 0.4, model.p)
        direct = direct_loglik(pattern, scenario.regions, scenario.spec, beta)
        glm = glm_offset_loglik(model, beta)
        worst = max(worst, abs((direct - glm) + const))
    elapsed = time.perf_counter() - start
    assert worst < 1e-10 * max(1.0, abs(const))
    assert elapsed < 1.0
    _report(1, "Proposition-1 equivalence")


def test_criterion_2_gradient_check(small_scenario_module):
    """Analytic score vs central differences, relative error < 1e-6."""
    scenario = small_scenario_module
    pattern = simulate_scenario(scenario, seed=11)
    model = build_model(pattern, scenario.regions, scenario.spec)
    rng = stream_rng(102, 0)
    start = time.perf_counter()
    for _ in range(20):
        beta = rng.normal(0.0, 0.3, model.p)
        grad, _ = score_and_sensitivity(model, beta)
        k = int(rng.integers(0, model.p))
        eps = 1e-6
        e = np.zeros(model.p)
        e[k] = eps
        fd = (loglik(model, beta + e) - loglik(model, beta - e)) / (2 * eps)
        assert abs(fd - grad[k]) / (1.0 + abs(grad[k])) < 1e-6
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _report(2, "gradient vs finite differences")


def test_criterion_3_solver_oracle():
    """Package solver matches the projected-subgradient reference to 1e-5."""
    start = time.perf_counter()
    for seed in range(20):
        inst = random_sgl_instance(200 + seed)
        beta, info = sgl_solve(inst["model"], inst["weights"])
        assert info.kkt < 1e-8
        ref = projected_subgradient_sgl(
            inst["counts"], inst["design"], inst["nu"], inst["groups"],
            inst["coef_w"], inst["group_w"], beta0=inst["beta_no"])
        np.testing.assert_allclose(beta, ref, atol=1e-5)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    _report(3, "sparse-group solver vs reference")


def test_criterion_4_poisson_k_baseline():
    """Centered L of homogeneous Poisson stays inside the 95% envelope."""
    window = Window.rectangle(0.0, 0.0, 1.0, 1.0)
    start = time.perf_counter()
    inside = 0
    runs = 20
    for run in range(runs):
        pts = simulate_inhom_poisson(500.0, window, rng=stream_rng(123, run))
        pattern = MarkedPointPattern(pts, np.ones(len(pts), int), window)
        result = envelope_test(pattern, 1, n_sims=199, level=0.95,
                               intensity="constant", seed=1000 + run, threads=4)
        inside += not result.rejects
    elapsed = time.perf_counter() - start
    assert inside >= 18, f"only {inside}/20 runs inside the envelope"
    assert elapsed < 120.0
    _report(4, f"Poisson K baseline ({inside}/20 inside)")


def test_criterion_5_envelope_calibration():
    """Empirical type-I error of the 95% envelope within [0.02, 0.09]."""
    window = Window.rectangle(0.0, 0.0, 1.0, 1.0)
    start = time.perf_counter()
    rejects = 0
    tests = 200
    for t in range(tests):
        pts = simulate_inhom_poisson(100.0, window, rng=stream_rng(777, t))
        pattern = MarkedPointPattern(pts, np.ones(len(pts), int), window)
        result = envelope_test(pattern, 1, n_sims=199, level=0.95,
                               intensity="constant", seed=5000 + t, threads=2)
        rejects += result.rejects
    elapsed = time.perf_counter() - start
    rate = rejects / tests
    assert 0.02 <= rate <= 0.09, f"type-I error {rate:.3f}"
    assert elapsed < 600.0
    _report(5, f"envelope calibration (rate {rate:.3f})")


def test_criterion_6_k_estimator_oracle():
    """Vectorized K and cross-K equal naive double loops to 1e-12."""
    window = Window.rectangle(0.0, 0.0, 3.0, 2.0)
    rng = stream_rng(106, 0)
    start = time.perf_counter()
    pts_a = simulate_inhom_poisson(50 / window.area, window, rng=rng)
    pts_b = simulate_inhom_poisson(50 / window.area, window, rng=rng)
    marks = np.r_[np.ones(len(pts_a), int), np.full(len(pts_b), 2)]
    pattern = MarkedPointPattern(np.vstack([pts_a, pts_b]), marks, window,
                                 mark_count=2)
    r = np.linspace(0.0, 0.5, 64)
    rho_a = np.full(len(pts_a), len(pts_a) / window.area)
    rho_b = np.full(len(pts_b), len(pts_b) / window.area)

    fast_k = inhom_k(pattern, 1, rho_a, r_grid=r).value
    slow_k = naive_k(pattern, 1, rho_a, r)
    np.testing.assert_allclose(fast_k, slow_k, rtol=1e-12, atol=1e-14)

    fast_cross = inhom_cross_k(pattern, 1, 2, rho_a, rho_b, r_grid=r).value
    slow_cross = naive_cross_k(pattern, 1, 2, rho_a, rho_b, r)
    np.testing.assert_allclose(fast_cross, slow_cross, rtol=1e-12, atol=1e-14)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _report(6, "K estimator vs naive double loop")


def test_criterion_7_consistency_rate(scenario):
    """log-log slope of estimation error vs expected count near -1/2."""
    start = time.perf_counter()
    report = consistency_experiment(scenario, scales=(1.0, 4.0, 16.0), reps=50,
                                    seed=0)
    elapsed = time.perf_counter() - start
    assert report.degenerate.sum() == 0
    assert -0.65 <= report.slope <= -0.35, f"slope {report.slope:.3f}"
    assert elapsed < 900.0
    _report(7, f"consistency rate (slope {report.slope:.3f})")


def test_criterion_8_oracle_property(scenario):
    """True zeros dropped (>= 0.9) and true actives kept (>= 0.95)."""
    start = time.perf_counter()
    report = selection_experiment(scenario, scales=(1.0, 4.0, 16.0), reps=100,
                                  seed=0)
    elapsed = time.perf_counter() - start
    zeros = scenario.coefficients == 0
    actives = (~zeros) & scenario.spec.penalized
    zero_rate = report.zero_frequency[-1][zeros].mean()
    active_rate = 1.0 - report.zero_frequency[-1][actives].mean()
    assert zero_rate >= 0.9, f"zero-selection frequency {zero_rate:.3f}"
    assert active_rate >= 0.95, f"active retention {active_rate:.3f}"
    # secondary trend check: zero-selection frequency non-decreasing with
    # scale in all but at most one of the zero coordinates
    per_coord = report.zero_frequency[:, zeros]
    monotone = np.sum(np.all(np.diff(per_coord, axis=0) >= -1e-12, axis=0))
    assert monotone >= zeros.sum() - 1
    assert elapsed < 900.0
    _report(8, f"oracle property (zero {zero_rate:.3f}, active {active_rate:.3f})")


def test_criterion_9_ci_coverage(scenario):
    """90% poisson-mode intervals cover the truth at rate in [0.85, 0.95]."""
    truth = scenario.coefficients
    scaled = scenario.with_scale(4.0)
    start = time.perf_counter()
    hits = 0
    total = 0
    for rep in range(200):
        pattern = simulate_scenario(scaled, seed=900, replicate=rep)
        model = build_model(pattern, scenario.regions, scenario.spec,
                            exposure_scale=4.0, check_coverage=False)
        beta = fit_unpenalized(model)
        cov = covariance(model, beta, mode="poisson")
        lo, hi, _ = confidence_intervals(beta, cov, level=0.90)
        hits += int(((lo <= truth) & (truth <= hi)).sum())
        total += model.p
    elapsed = time.perf_counter() - start
    rate = hits / total
    assert 0.85 <= rate <= 0.95, f"componentwise coverage {rate:.4f}"
    assert elapsed < 600.0
    _report(9, f"CI coverage (rate {rate:.4f})")


def test_criterion_10_reproducibility(tmp_path):
    """Manifest re-runs are byte-identical across 1, 2 and 8 threads."""
    start = time.perf_counter()
    sim = tmp_path / "sim"
    assert cli_main(["simulate", "--rate", "120", "--window", "0", "0", "1", "1",
                     "--seed", "5", "--output", str(sim)]) == 0

    base = tmp_path / "env_t1"
    assert cli_main(["envelope", "--points", str(sim / "points.csv"),
                     "--window", "0", "0", "1", "1", "--mark", "1",
                     "--sims", "99", "--intensity", "adaptive",
                     "--pilot-bandwidth", "0.12", "--grid", "64",
                     "--r-steps", "32", "--seed", "6", "--threads", "1",
                     "--output", str(base)]) == 0
    reference = (base / "envelope_mark1.csv").read_bytes()
    for threads in (2, 8):
        out = tmp_path / f"env_t{threads}"
        assert cli_main(["envelope", "--config", str(base / "manifest.json"),
                         "--threads", str(threads), "--output", str(out)]) == 0
        assert (out / "envelope_mark1.csv").read_bytes() == reference

    val_base = tmp_path / "val_t1"
    assert cli_main(["validate", "--experiment", "consistency", "--scales", "1",
                     "--scales", "2", "--reps", "3", "--base-count", "800",
                     "--seed", "2", "--threads", "1",
                     "--output", str(val_base)]) == 0
    val_ref = (val_base / "report.json").read_bytes()
    for threads in (2, 8):
        out = tmp_path / f"val_t{threads}"
        assert cli_main(["validate", "--config", str(val_base / "manifest.json"),
                         "--threads", str(threads), "--output", str(out)]) == 0
        assert (out / "report.json").read_bytes() == val_ref

    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    _report(10, "bit-identical manifest re-runs across thread counts")
