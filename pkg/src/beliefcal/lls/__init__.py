"""Local least squares: learning rates, trimming, local regressions, APE and CAPE."""

from .kernel import epanechnikov, rank_kernel_weights
from .learning_rate import (
    infer_alpha_passive,
    kernel_ratio,
    learning_rate_raw,
    learning_rate_smoothed,
    raw_alpha_array,
)
from .local import (
    ALPHA_SOURCES,
    CapeCurve,
    LlsConfig,
    LocalProblem,
    cape_vector,
    conditioning_alpha,
    estimate_ape,
    estimate_cape,
    evaluate_centers,
    expected_alpha_rank,
    local_cape_point,
    local_estimates,
    prepare,
)
from .trimming import TrimResult, trim

__all__ = [
    "ALPHA_SOURCES",
    "CapeCurve",
    "LlsConfig",
    "LocalProblem",
    "TrimResult",
    "cape_vector",
    "conditioning_alpha",
    "epanechnikov",
    "estimate_ape",
    "estimate_cape",
    "evaluate_centers",
    "expected_alpha_rank",
    "infer_alpha_passive",
    "kernel_ratio",
    "learning_rate_raw",
    "learning_rate_smoothed",
    "local_cape_point",
    "local_estimates",
    "prepare",
    "rank_kernel_weights",
    "raw_alpha_array",
    "trim",
]
