"""Reference estimator tests: bootstrap, traditional subsampling, CLT."""

import numpy as np
import pytest

from aqp.errors import SubsampleTooLarge
from aqp.estimators import bootstrap_ci, clt_ci, traditional_subsampling_ci


def test_bootstrap_constant_data_zero_width():
    est = bootstrap_ci(np.full(50, 3.0), np.mean, b=100, alpha=0.05, seed=1)
    assert est.ci_low == est.ci_high == 3.0


def test_bootstrap_smoke_b2():
    est = bootstrap_ci(np.arange(100.0), np.mean, b=2, alpha=0.05, seed=1)
    assert est.ci_low <= est.point <= est.ci_high or est.half_width >= 0


def test_bootstrap_coverage_mean():
    rng = np.random.default_rng(0)
    trials, hits = 200, 0
    for seed in range(trials):
        x = rng.normal(10.0, 10.0, 2_000)
        est = bootstrap_ci(x, np.mean, b=300, alpha=0.05, seed=seed)
        hits += est.ci_low <= 10.0 <= est.ci_high
    assert 0.90 <= hits / trials <= 0.99


def test_traditional_constant_zero_width():
    est = traditional_subsampling_ci(
        np.full(100, 2.0), np.mean, n_s=10, b=50, alpha=0.05, seed=0
    )
    assert est.ci_low == est.ci_high == 2.0


def test_traditional_subsample_too_large():
    with pytest.raises(SubsampleTooLarge):
        traditional_subsampling_ci(np.arange(10.0), np.mean, 10, 5, 0.05, 0)


def test_traditional_agrees_with_bootstrap_on_mean():
    rng = np.random.default_rng(3)
    x = rng.normal(0.0, 1.0, 100_000)
    boot = np.mean(
        [bootstrap_ci(x, np.mean, 400, 0.05, s).half_width for s in range(3)]
    )
    trad = np.mean(
        [
            traditional_subsampling_ci(x, np.mean, 316, 400, 0.05, s).half_width
            for s in range(3)
        ]
    )
    assert abs(boot - trad) / boot < 0.10


def test_clt_exact_values():
    est = clt_ci(np.array([1.0, 1.0, 1.0]), alpha=0.05)
    assert est.half_width == 0.0
    rng = np.random.default_rng(0)
    x = rng.normal(0.0, 1.0, 10_000)
    est = clt_ci(x, alpha=0.05)
    # half width ~ 1.96 / sqrt(n)
    assert est.half_width == pytest.approx(1.96 / 100.0, rel=0.05)
    one_sigma = clt_ci(x, alpha=0.32)
    assert one_sigma.half_width == pytest.approx(0.994 * x.std(ddof=1) / 100.0, rel=1e-3)


def test_resample_streams_reproducible():
    x = np.arange(1000.0)
    a = bootstrap_ci(x, np.mean, 50, 0.05, seed=9)
    b = bootstrap_ci(x, np.mean, 50, 0.05, seed=9)
    assert (a.ci_low, a.ci_high) == (b.ci_low, b.ci_high)


def test_dkw_endpoint_variance_shrinks_like_sqrt_b():
    # Monte Carlo variance of the CI endpoint falls roughly as 1/sqrt(b)
    rng = np.random.default_rng(1)
    x = rng.normal(0.0, 1.0, 5_000)

    def endpoint_sd(b, reps=60):
        ends = [
            traditional_subsampling_ci(x, np.mean, 70, b, 0.05, seed).ci_high
            for seed in range(reps)
        ]
        return np.std(ends)

    sd10, sd100, sd1000 = endpoint_sd(10), endpoint_sd(100), endpoint_sd(1000)
    assert sd10 > sd100 > sd1000
    assert sd10 / sd100 == pytest.approx(np.sqrt(10), rel=0.6)
    assert sd100 / sd1000 == pytest.approx(np.sqrt(10), rel=0.6)
