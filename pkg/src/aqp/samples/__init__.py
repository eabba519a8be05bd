"""Sample metadata, policy, ratio solving, and sample construction."""

from .builders import (
    append_to_samples,
    build_from_request,
    build_hashed,
    build_stratified,
    build_uniform,
    group_sizes,
)
from .catalog import SampleCatalog, SampleRequest, default_requests
from .descriptors import (
    HASHED,
    IRREGULAR,
    PROB_COLUMN,
    STRATIFIED,
    UNIFORM,
    PolicyConfig,
    SampleDescriptor,
)
from .ratios import (
    StaircaseTable,
    normal_approx_min_ratio,
    solve_min_ratio,
    staircase_thresholds,
)

__all__ = [
    "HASHED",
    "IRREGULAR",
    "PROB_COLUMN",
    "STRATIFIED",
    "UNIFORM",
    "PolicyConfig",
    "SampleCatalog",
    "SampleDescriptor",
    "SampleRequest",
    "default_requests",
    "StaircaseTable",
    "append_to_samples",
    "build_from_request",
    "build_hashed",
    "build_stratified",
    "build_uniform",
    "group_sizes",
    "normal_approx_min_ratio",
    "solve_min_ratio",
    "staircase_thresholds",
]
