"""Variational subsampling: sid machinery and error estimation."""

from .estimate import (
    DeviationDistribution,
    ErrorEstimate,
    SubsampleAggregates,
    confidence_interval,
    empirical_distribution,
    estimator_scale,
    hashed_count_distinct,
    ht_avg,
    ht_count,
    ht_quantile,
    ht_sum,
    subsample_stderr,
)
from .variational import (
    SID_COLUMN,
    VariationalSpec,
    VariationalTable,
    assign_sids,
    draw_sids,
    h_join_sid,
    join_variational,
    nest_variational,
)

__all__ = [
    "DeviationDistribution",
    "ErrorEstimate",
    "SID_COLUMN",
    "SubsampleAggregates",
    "VariationalSpec",
    "VariationalTable",
    "assign_sids",
    "confidence_interval",
    "draw_sids",
    "empirical_distribution",
    "estimator_scale",
    "h_join_sid",
    "hashed_count_distinct",
    "ht_avg",
    "ht_count",
    "ht_quantile",
    "ht_sum",
    "join_variational",
    "nest_variational",
    "subsample_stderr",
]
