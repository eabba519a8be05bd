"""Turning per-subsample aggregates into error estimates.

The deviation distribution weights each subsample deviation by the square
root of its realized size, which corrects for subsamples of unequal size;
its quantiles divided by sqrt(n) bound the full-sample estimate. The
standard-error recipe mirrors the rewritten query's error column:
stddev(estimates) * sqrt(avg(sizes)) / sqrt(sum(sizes)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import TooFewSubsamples, ZeroProbability
from ..relational.executor import weighted_percentile


@dataclass(frozen=True)
class ErrorEstimate:
    """Point estimate with a confidence interval and standard error."""

    point: float
    ci_low: float
    ci_high: float
    alpha: float
    stderr: float

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0


@dataclass
class SubsampleAggregates:
    """One output group's sample estimate plus its per-subsample estimates."""

    g0: float
    sids: np.ndarray
    estimates: np.ndarray
    sizes: np.ndarray
    sample_size: Optional[int] = None  # defaults to sum(sizes)

    def __post_init__(self):
        self.sids = np.asarray(self.sids, dtype=np.int64)
        self.estimates = np.asarray(self.estimates, dtype=np.float64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.sample_size if self.sample_size is not None else self.sizes.sum())


class DeviationDistribution:
    """Step-function empirical distribution of scaled subsample deviations."""

    def __init__(self, support: np.ndarray):
        self.support = np.sort(np.asarray(support, dtype=np.float64))

    def cdf(self, x: float) -> float:
        return float(np.searchsorted(self.support, x, side="right")) / len(self.support)

    def quantile(self, alpha: float) -> float:
        k = len(self.support)
        idx = int(np.ceil(alpha * k)) - 1
        return float(self.support[min(max(idx, 0), k - 1)])


def empirical_distribution(agg: SubsampleAggregates) -> DeviationDistribution:
    """sqrt(size)-scaled deviations of subsample estimates from the sample estimate."""
    usable = agg.sizes >= 1
    if int(usable.sum()) < 2:
        raise TooFewSubsamples(
            f"need at least 2 non-empty subsamples, have {int(usable.sum())}"
        )
    devs = np.sqrt(agg.sizes[usable]) * (agg.estimates[usable] - agg.g0)
    return DeviationDistribution(devs)


def subsample_stderr(estimates: np.ndarray, sizes: np.ndarray) -> float:
    """stddev(estimates) * sqrt(avg(sizes)) / sqrt(sum(sizes))."""
    estimates = np.asarray(estimates, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.float64)
    if len(estimates) < 2:
        return float("nan")
    return float(estimates.std(ddof=1) * np.sqrt(sizes.mean()) / np.sqrt(sizes.sum()))


def confidence_interval(
    agg: SubsampleAggregates, alpha: float = 0.05, spec=None
) -> ErrorEstimate:
    """Quantile confidence interval around the sample estimate.

    Deviation quantiles are divided by sqrt(n); ``spec`` (a
    VariationalSpec) supplies n when the aggregates do not carry it.
    """
    dist = empirical_distribution(agg)
    n = agg.sample_size
    if n is None and spec is not None:
        n = spec.n
    if n is None:
        n = int(agg.sizes.sum())
    scale = np.sqrt(n) if n else float("nan")
    lo = agg.g0 - dist.quantile(1.0 - alpha / 2.0) / scale
    hi = agg.g0 - dist.quantile(alpha / 2.0) / scale
    usable = agg.sizes >= 1
    stderr = subsample_stderr(agg.estimates[usable], agg.sizes[usable])
    return ErrorEstimate(agg.g0, float(lo), float(hi), alpha, stderr)


# --- per-tuple weighting rules ------------------------------------------------


def _check_probs(probs: np.ndarray):
    probs = np.asarray(probs, dtype=np.float64)
    if len(probs) and probs.min() <= 0.0:
        raise ZeroProbability("inclusion probabilities must be positive")
    return probs


def ht_count(probs: Sequence[float]) -> float:
    """Unbiased count: sum of inverse inclusion probabilities."""
    return float(_check_probs(np.asarray(probs)).__rtruediv__(1.0).sum())


def ht_sum(values: Sequence[float], probs: Sequence[float]) -> float:
    probs = _check_probs(np.asarray(probs))
    return float((np.asarray(values, dtype=np.float64) / probs).sum())


def ht_avg(values: Sequence[float], probs: Sequence[float]) -> float:
    probs = _check_probs(np.asarray(probs))
    w = 1.0 / probs
    return float((np.asarray(values, dtype=np.float64) * w).sum() / w.sum())


def hashed_count_distinct(values: Sequence, tau: float) -> float:
    """Distinct count over a hashed sample scaled by the hash share."""
    if tau <= 0:
        raise ZeroProbability("tau must be positive")
    return len({v for v in values if v is not None}) / tau


def ht_quantile(values: Sequence[float], probs: Sequence[float], p: float) -> float:
    probs = _check_probs(np.asarray(probs))
    return weighted_percentile(
        np.asarray(values, dtype=np.float64), 1.0 / probs, p
    )


def estimator_scale(kind: str, probs: Sequence[float], **kw) -> Callable:
    """Per-tuple weight rule for an aggregate kind over given probabilities.

    Returns a callable mapping the tuple values (ignored for count) to the
    population-scale estimate.
    """
    probs = np.asarray(probs, dtype=np.float64)
    _check_probs(probs)
    if kind == "count":
        return lambda values=None: ht_count(probs)
    if kind == "sum":
        return lambda values: ht_sum(values, probs)
    if kind == "avg":
        return lambda values: ht_avg(values, probs)
    if kind == "count_distinct":
        tau = kw.get("tau", 1.0)
        return lambda values: hashed_count_distinct(values, tau)
    if kind == "quantile":
        p = kw["param"]
        return lambda values: ht_quantile(values, probs, p)
    raise ValueError(f"no weighting rule for aggregate kind {kind!r}")
