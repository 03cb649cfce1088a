from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pdpf.density import (
    DensityError,
    TuningConfig,
    WindowFunction,
    analytic_reference,
    count_modes,
    estimate_pdf,
    histogram_reference,
    mc_index,
    mise,
    mppt,
    reference_grid,
    silverman_bandwidth,
    tune_bandwidth,
    tune_sample_count,
)


def _grid_estimate(values, grid=np.linspace(0.9, 1.0, 101)):
    from pdpf.density import DensityEstimate

    return DensityEstimate(grid, np.asarray(values, dtype=float), 0.0, "analytic", 0)


@pytest.mark.parametrize("kind", ["gaussian", "box"])
def test_window_mass(kind):
    u = np.linspace(-8, 8, 160_001)
    assert np.trapezoid(WindowFunction(kind)(u), u) == pytest.approx(1.0, abs=1e-6)


def test_unknown_kernel():
    with pytest.raises(DensityError):
        WindowFunction("triangle")


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 300), st.floats(1e-4, 2.0), st.sampled_from(["gaussian", "box"]), st.integers(0, 2**31))
def test_estimates_integrate_to_one(n, rel_bw, kind, seed):
    x = np.random.default_rng(seed).normal(0.95, 0.004, n)
    est = estimate_pdf(x, rel_bw * 0.004, kind)
    assert np.all(est.values >= 0)
    assert est.integral() == pytest.approx(1.0, abs=1e-3)


def test_single_sample_and_bad_bandwidth():
    with pytest.raises(DensityError):
        estimate_pdf([0.97], 0.01)
    with pytest.raises(DensityError):
        estimate_pdf([0.97, 0.98], 0.0)


def test_mise_and_mppt_examples():
    grid = np.linspace(0.9, 1.0, 101)
    a = _grid_estimate(stats.norm.pdf(grid, 0.97, 0.01), grid)
    b = _grid_estimate(stats.norm.pdf(grid, 0.96, 0.01), grid)
    assert mise(a, a) == 0.0
    assert mppt(a, b) == pytest.approx(0.01)
    assert mc_index(2.0, 0.01, a=1.0, b=0.0) == 2.0
    assert mc_index(2.0, 0.01) == pytest.approx(2.0005)


def test_grid_mismatch_and_flat_density():
    a = _grid_estimate(np.ones(101))
    b = _grid_estimate(np.ones(51), np.linspace(0.9, 1.0, 51))
    with pytest.raises(DensityError):
        mise(a, b)
    with pytest.raises(DensityError):
        mppt(a, a)


def test_histogram_reference_integrates_to_one():
    x = np.random.default_rng(3).normal(size=5000)
    ref = histogram_reference(x, reference_grid(x, 4001))
    assert ref.integral() == pytest.approx(1.0, abs=5e-3)
    with pytest.raises(DensityError):
        histogram_reference(np.full(10, 1.0))


@pytest.mark.parametrize("seed", range(5))
def test_tuned_bandwidth_near_silverman(seed):
    # exhaustive score search on a fine lambda grid against the generating density
    x = np.random.default_rng(seed).standard_normal(1000)
    ref = analytic_reference(stats.norm.pdf, np.linspace(-6, 6, 1201))
    res = tune_bandwidth(x, TuningConfig(n_lambdas=200), ref)
    ratio = res.bandwidth / silverman_bandwidth(x)
    assert 0.5 <= ratio <= 2.0
    assert res.mc[np.argmin(res.mc)] == res.mc_min


def test_pure_mise_tuning_minimises_mise():
    x = np.random.default_rng(8).standard_normal(500)
    ref = analytic_reference(stats.norm.pdf, np.linspace(-6, 6, 601))
    res = tune_bandwidth(x, TuningConfig(b=0.0), ref)
    assert res.mise[np.argmin(res.mc)] == res.mise.min()


def test_cross_validation_mode():
    x = np.random.default_rng(4).standard_normal(800)
    res = tune_bandwidth(x, TuningConfig())
    assert res.mode == "lscv"
    assert 0.5 <= res.bandwidth / silverman_bandwidth(x) <= 2.0


def test_tuning_config_validation():
    with pytest.raises(DensityError):
        TuningConfig(a=0.0, b=0.0)
    with pytest.raises(DensityError):
        TuningConfig(lambdas=[]).lambda_grid([1.0, 2.0])


def test_mode_counting():
    rng = np.random.default_rng(6)
    x = np.concatenate([rng.normal(0.95, 0.002, 500), rng.normal(0.97, 0.002, 500)])
    assert count_modes(estimate_pdf(x, 0.001)) == 2
    assert count_modes(estimate_pdf(x, 0.02)) == 1


def _normal_draw(k_n, r):
    return np.random.default_rng(1000 * k_n + r).standard_normal(k_n)


def test_sample_count_infinite_threshold_returns_smallest():
    ref = analytic_reference(stats.norm.pdf, np.linspace(-6, 6, 401))
    cfg = TuningConfig(n_lambdas=16, replications=4)
    res = tune_sample_count(_normal_draw, [20, 40, 80], cfg, ref)
    assert res.k_n == 20 and res.converged


def test_sample_count_std_sequence_decreases():
    ref = analytic_reference(stats.norm.pdf, np.linspace(-6, 6, 401))
    cfg = TuningConfig(n_lambdas=16, replications=20, convergence_threshold=0.01)
    res = tune_sample_count(_normal_draw, [10, 30, 100, 300, 1000], cfg, ref)
    assert res.spearman < 0
    assert res.k_n in res.candidates
    with pytest.raises(DensityError):
        tune_sample_count(_normal_draw, [30, 10], cfg, ref)
