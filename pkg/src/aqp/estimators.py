"""Reference interval estimators: bootstrap, traditional subsampling, CLT.

These are deliberately independent of the variational machinery; the test
and bench suites use them as oracles when validating it. Statistics are
supplied as plain callables over a value array. Resample draws come from
generator streams keyed by (seed, resample index), so individual resamples
are independent and reproducible. Quantiles interpolate linearly (type 7).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import SubsampleTooLarge
from .varsub.estimate import ErrorEstimate

Statistic = Callable[[np.ndarray], float]


def _as_array(sample: Sequence[float]) -> np.ndarray:
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 1 or len(x) < 1:
        raise ValueError("sample must be a non-empty 1-d sequence")
    return x


def bootstrap_ci(
    sample: Sequence[float],
    statistic: Statistic,
    b: int,
    alpha: float,
    seed: int,
) -> ErrorEstimate:
    """Quantile bootstrap: b with-replacement resamples of full size."""
    if b < 2:
        raise ValueError("bootstrap needs at least 2 resamples")
    x = _as_array(sample)
    n = len(x)
    g0 = float(statistic(x))
    reps = np.empty(b)
    for j in range(b):
        rng = np.random.default_rng([seed, j])
        reps[j] = statistic(x[rng.integers(0, n, n)])
    devs = g0 - reps
    t_lo = float(np.quantile(devs, 1.0 - alpha / 2.0))
    t_hi = float(np.quantile(devs, alpha / 2.0))
    stderr = float(reps.std(ddof=1))
    return ErrorEstimate(g0, g0 - t_lo, g0 - t_hi, alpha, stderr)


def traditional_subsampling_ci(
    sample: Sequence[float],
    statistic: Statistic,
    n_s: int,
    b: int,
    alpha: float,
    seed: int,
) -> ErrorEstimate:
    """b without-replacement subsamples of exact size n_s, scaled quantiles."""
    x = _as_array(sample)
    n = len(x)
    if n_s >= n:
        raise SubsampleTooLarge(f"subsample size {n_s} must be below n={n}")
    if b < 2:
        raise ValueError("subsampling needs at least 2 subsamples")
    g0 = float(statistic(x))
    reps = np.empty(b)
    for j in range(b):
        rng = np.random.default_rng([seed, j])
        reps[j] = statistic(x[rng.choice(n, n_s, replace=False)])
    scale = np.sqrt(n_s / n)
    devs = g0 - reps
    t_lo = float(np.quantile(devs, 1.0 - alpha / 2.0))
    t_hi = float(np.quantile(devs, alpha / 2.0))
    stderr = float(reps.std(ddof=1) * scale)
    return ErrorEstimate(g0, g0 - t_lo * scale, g0 - t_hi * scale, alpha, stderr)


def clt_ci(sample: Sequence[float], alpha: float) -> ErrorEstimate:
    """Closed-form normal interval for the mean."""
    x = _as_array(sample)
    if len(x) < 2:
        raise ValueError("CLT interval needs at least 2 values")
    mean = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(len(x)))
    z = float(norm.ppf(1.0 - alpha / 2.0))
    return ErrorEstimate(mean, mean - z * se, mean + z * se, alpha, se)
