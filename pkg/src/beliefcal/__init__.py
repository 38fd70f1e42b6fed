"""Estimators for the effect of beliefs on outcomes in information experiments.

Standard panel and instrumental-variable estimators, the local least squares
estimator of the average partial effect, a Bayesian bootstrap over full
pipelines, and a simulator of Bayesian learners with costly information.
"""

__version__ = "0.1.0"

from .datamodel import (
    BeliefRecord,
    Dataset,
    DerivedColumns,
    Design,
    EstimateResult,
    rank_transform,
    validate_dataset,
)
from .errors import BeliefcalError, ConfigError, EstimationError, ValidationError
from .estimators import (
    WeightTable,
    implied_weights,
    panel_fd,
    reduced_form,
    tsls_passive_exposure,
    tsls_split,
    wald_active,
)
from .inference import BootstrapConfig, bayesian_bootstrap
from .lls import CapeCurve, LlsConfig, estimate_ape, estimate_cape, local_cape_point
from .regress import RegressionSpec, binary_contrast, wls_fit
from .simlab import (
    Dist,
    SignalSpec,
    SimConfig,
    SimTruth,
    acquire_information,
    bayesian_update,
    simulate_population,
)

__all__ = [
    "BeliefRecord",
    "BeliefcalError",
    "BootstrapConfig",
    "CapeCurve",
    "ConfigError",
    "Dataset",
    "DerivedColumns",
    "Design",
    "Dist",
    "EstimateResult",
    "EstimationError",
    "LlsConfig",
    "RegressionSpec",
    "SignalSpec",
    "SimConfig",
    "SimTruth",
    "ValidationError",
    "WeightTable",
    "acquire_information",
    "bayesian_bootstrap",
    "bayesian_update",
    "binary_contrast",
    "estimate_ape",
    "estimate_cape",
    "implied_weights",
    "local_cape_point",
    "panel_fd",
    "rank_transform",
    "reduced_form",
    "simulate_population",
    "tsls_passive_exposure",
    "tsls_split",
    "validate_dataset",
    "wald_active",
    "wls_fit",
]
