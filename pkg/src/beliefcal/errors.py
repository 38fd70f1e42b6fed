"""Exception hierarchy.

Every failure raised by the library derives from :class:`BeliefcalError`, so
callers (the CLI, the bootstrap) can separate expected estimation failures
from programming errors.
"""

from __future__ import annotations


class BeliefcalError(Exception):
    """Base class for all library errors."""


# -- data validation ---------------------------------------------------------


class ValidationError(BeliefcalError):
    """Raw records do not form a valid dataset."""


class MissingField(ValidationError):
    def __init__(self, record_id, field: str, detail: str = ""):
        self.record_id = record_id
        self.field = field
        msg = f"record {record_id!r}: field {field!r}"
        msg += f" {detail}" if detail else " is required"
        super().__init__(msg)


class InconsistentField(ValidationError):
    def __init__(self, record_id, field: str, detail: str):
        self.record_id = record_id
        self.field = field
        super().__init__(f"record {record_id!r}: field {field!r} {detail}")


class DuplicateId(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


# -- configuration -----------------------------------------------------------


class ConfigError(BeliefcalError, ValueError):
    """Invalid configuration or incompatible option combination."""


class InvalidDistributionSpec(ConfigError):
    pass


# -- simulation --------------------------------------------------------------


class NonPositiveSignalVariance(BeliefcalError, ValueError):
    pass


class IterationCapExceeded(BeliefcalError):
    pass


# -- estimation --------------------------------------------------------------


class EstimationError(BeliefcalError):
    """An estimator could not produce a value on the given data."""


class RankDeficient(EstimationError):
    pass


class InsufficientRows(EstimationError):
    pass


class NotBinary(EstimationError):
    pass


class ZeroVariance(EstimationError):
    pass


class WeakFirstStage(EstimationError):
    pass


class SingleArm(EstimationError):
    pass


class MissingCounterfactualSignal(EstimationError):
    pass


class EmptySplit(EstimationError):
    pass


class MissingAlpha(EstimationError):
    pass


class ZeroExposure(EstimationError):
    pass


class DegenerateSmoothing(EstimationError):
    pass


class MissingPriorVariance(EstimationError):
    pass


class PredictionRankDeficient(EstimationError):
    pass


class AllTrimmed(EstimationError):
    pass


class InsufficientNeighborhood(EstimationError):
    pass


class NoZeroUpdateGroup(EstimationError):
    """Panel local regressions need records whose belief did not change."""


class AllPointsSkipped(EstimationError):
    pass


class TooManySkipped(EstimationError):
    pass


class TooManyFailures(EstimationError):
    pass
