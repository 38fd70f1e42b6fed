"""Experiment data model: records, validation, derived columns and ranks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DuplicateId,
    EmptyDataset,
    InconsistentField,
    MissingField,
    NonFinite,
    ValidationError,
)

__all__ = [
    "Design",
    "BeliefRecord",
    "DerivedColumns",
    "Dataset",
    "EstimateResult",
    "validate_dataset",
    "rank_transform",
]


class Design(str, Enum):
    PANEL = "panel"
    ACTIVE = "active"
    PASSIVE = "passive"

    @classmethod
    def parse(cls, value: "Design | str") -> "Design":
        if isinstance(value, Design):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(
                f"unknown design {value!r}; expected one of panel, active, passive"
            ) from None


@dataclass(frozen=True)
class BeliefRecord:
    """One participant.

    ``signal`` is the signal actually shown; ``signal_high`` and
    ``signal_low`` are the potential signals of arms A and B. Missing values
    are ``None``. ``covariates`` maps covariate names to values in a fixed
    order shared by every record of a dataset.
    """

    id: str
    prior: float
    posterior: float
    outcome_post: float
    arm: str | None = None
    prior_var: float | None = None
    signal: float | None = None
    signal_high: float | None = None
    signal_low: float | None = None
    outcome_pre: float | None = None
    covariates: Mapping[str, float] = field(default_factory=dict)
    group: str | None = None


@dataclass(frozen=True)
class DerivedColumns:
    delta_x: float
    delta_y: float | None
    exposure: float | None
    treat: int


_NUMERIC = (
    "prior",
    "posterior",
    "outcome_post",
    "prior_var",
    "signal",
    "signal_high",
    "signal_low",
    "outcome_pre",
)


@dataclass(frozen=True)
class Dataset:
    """Validated, immutable collection of records.

    Column accessors return float arrays with NaN for missing values; they
    are computed once and shared, so callers must not modify them in place.
    """

    design: Design
    records: tuple[BeliefRecord, ...]
    derived: tuple[DerivedColumns, ...]
    covariate_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n(self) -> int:
        return len(self.records)

    def _col(self, name: str) -> np.ndarray:
        out = np.array(
            [getattr(r, name) for r in self.records], dtype=object
        )
        out[out == None] = np.nan  # noqa: E711
        arr = out.astype(float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    @cached_property
    def prior(self) -> np.ndarray:
        return self._col("prior")

    @cached_property
    def posterior(self) -> np.ndarray:
        return self._col("posterior")

    @cached_property
    def prior_var(self) -> np.ndarray:
        return self._col("prior_var")

    @cached_property
    def signal(self) -> np.ndarray:
        return self._col("signal")

    @cached_property
    def signal_high(self) -> np.ndarray:
        return self._col("signal_high")

    @cached_property
    def signal_low(self) -> np.ndarray:
        return self._col("signal_low")

    @cached_property
    def outcome_pre(self) -> np.ndarray:
        return self._col("outcome_pre")

    @cached_property
    def outcome_post(self) -> np.ndarray:
        return self._col("outcome_post")

    @cached_property
    def treat(self) -> np.ndarray:
        arr = np.array([d.treat for d in self.derived], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def delta_x(self) -> np.ndarray:
        arr = np.array([d.delta_x for d in self.derived], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def delta_y(self) -> np.ndarray:
        arr = np.array(
            [np.nan if d.delta_y is None else d.delta_y for d in self.derived],
            dtype=float,
        )
        arr.setflags(write=False)
        return arr

    @cached_property
    def exposure(self) -> np.ndarray:
        arr = np.array(
            [np.nan if d.exposure is None else d.exposure for d in self.derived],
            dtype=float,
        )
        arr.setflags(write=False)
        return arr

    @cached_property
    def groups(self) -> np.ndarray:
        return np.array([r.group for r in self.records], dtype=object)

    @cached_property
    def covariates(self) -> np.ndarray:
        """``(n, k)`` matrix in ``covariate_names`` order."""
        k = len(self.covariate_names)
        arr = np.empty((self.n, k), dtype=float)
        for i, r in enumerate(self.records):
            for j, name in enumerate(self.covariate_names):
                arr[i, j] = r.covariates[name]
        arr.setflags(write=False)
        return arr

    def subset(self, indices: Sequence[int] | np.ndarray) -> "Dataset":
        idx = [int(i) for i in np.asarray(indices).ravel()]
        if not idx:
            raise EmptyDataset("subset selects no records")
        return Dataset(
            design=self.design,
            records=tuple(self.records[i] for i in idx),
            derived=tuple(self.derived[i] for i in idx),
            covariate_names=self.covariate_names,
        )


@dataclass(frozen=True)
class EstimateResult:
    estimator: str
    point: float
    se: float | None = None
    bandwidth: float | None = None
    n_total: int = 0
    n_used: int = 0
    seed: int | None = None
    skipped_points: int = 0

    def __post_init__(self):
        if self.n_used > self.n_total:
            raise ValueError("n_used cannot exceed n_total")
        if self.se is not None and self.se < 0:
            raise ValueError("se must be nonnegative")

    def with_se(self, se: float, seed: int | None) -> "EstimateResult":
        return replace(self, se=float(se), seed=seed)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# -- validation --------------------------------------------------------------

_RECORD_KEYS = {f.name for f in fields(BeliefRecord)}


def _coerce(raw) -> BeliefRecord:
    if isinstance(raw, BeliefRecord):
        return raw
    if not isinstance(raw, Mapping):
        raise ValidationError(f"cannot interpret {type(raw).__name__} as a record")
    unknown = set(raw) - _RECORD_KEYS
    if unknown:
        raise ValidationError(f"unknown record fields: {sorted(unknown)}")
    rid = raw.get("id")
    for name in ("id", "prior", "posterior", "outcome_post"):
        if raw.get(name) is None:
            raise MissingField(rid, name)
    kwargs = dict(raw)
    kwargs["id"] = str(rid)
    kwargs["covariates"] = dict(raw.get("covariates") or {})
    return BeliefRecord(**kwargs)


def _is_clean(rec: BeliefRecord) -> bool:
    """True when no field needs coercion, so the record can be kept as is."""
    for name in _NUMERIC:
        v = getattr(rec, name)
        if v is not None and not (type(v) is float and math.isfinite(v)):
            return False
    for name in ("prior", "posterior", "outcome_post"):
        if getattr(rec, name) is None:
            return False
    if rec.arm not in (None, "A", "B"):
        return False
    if rec.group is not None and type(rec.group) is not str:
        return False
    return all(type(v) is float and math.isfinite(v) for v in rec.covariates.values())


def _check_numbers(rec: BeliefRecord) -> BeliefRecord:
    if _is_clean(rec):
        return rec
    updates = {}
    for name in _NUMERIC:
        v = getattr(rec, name)
        if v is None:
            continue
        v = float(v)
        if math.isnan(v):
            updates[name] = None
            continue
        if math.isinf(v):
            raise NonFinite(f"record {rec.id!r}: field {name!r} is not finite")
        updates[name] = v
    for name in ("prior", "posterior", "outcome_post"):
        if updates.get(name, getattr(rec, name)) is None:
            raise MissingField(rec.id, name)
    cov = {}
    for k, v in rec.covariates.items():
        v = float(v)
        if not math.isfinite(v):
            raise NonFinite(f"record {rec.id!r}: covariate {k!r} is not finite")
        cov[k] = v
    updates["covariates"] = cov
    if rec.arm is not None:
        arm = str(rec.arm).strip().upper()
        updates["arm"] = arm or None
    if rec.group is not None:
        updates["group"] = str(rec.group)
    return replace(rec, **updates)


def _check_design(rec: BeliefRecord, design: Design) -> None:
    if rec.prior_var is not None and rec.prior_var < 0:
        raise InconsistentField(rec.id, "prior_var", "must be nonnegative")
    if rec.arm not in (None, "A", "B"):
        raise InconsistentField(rec.id, "arm", f"must be A or B, got {rec.arm!r}")

    if design is Design.PANEL:
        if rec.outcome_pre is None:
            raise MissingField(rec.id, "outcome_pre")
        return

    if rec.arm is None:
        raise MissingField(rec.id, "arm")
    if design is Design.PASSIVE:
        if rec.arm == "B" and rec.signal is not None:
            raise MissingField(
                rec.id, "signal", "must be absent for the passive control arm"
            )
        if rec.arm == "A":
            if rec.signal is None:
                raise MissingField(rec.id, "signal")
            if rec.signal_high is not None and rec.signal_high != rec.signal:
                raise InconsistentField(
                    rec.id, "signal", "must equal signal_high in arm A"
                )
        return

    # active
    if rec.signal is None:
        raise MissingField(rec.id, "signal")
    expected = rec.signal_high if rec.arm == "A" else rec.signal_low
    name = "signal_high" if rec.arm == "A" else "signal_low"
    if expected is not None and expected != rec.signal:
        raise InconsistentField(rec.id, "signal", f"must equal {name} in arm {rec.arm}")


def _derive(rec: BeliefRecord, design: Design) -> DerivedColumns:
    delta_y = None
    if rec.outcome_pre is not None:
        delta_y = rec.outcome_post - rec.outcome_pre
    exposure = None
    if design is Design.ACTIVE:
        if rec.signal_high is not None and rec.signal_low is not None:
            exposure = rec.signal_high - rec.signal_low
    else:
        s_high = rec.signal_high
        if s_high is None and rec.arm == "A":
            s_high = rec.signal
        if s_high is not None:
            exposure = s_high - rec.prior
    return DerivedColumns(
        delta_x=rec.posterior - rec.prior,
        delta_y=delta_y,
        exposure=exposure,
        treat=1 if rec.arm == "A" else 0,
    )


def validate_dataset(
    raw_records: Iterable[BeliefRecord | Mapping],
    design: Design | str,
) -> Dataset:
    """Check design-specific field requirements and compute derived columns.

    Records violating a requirement are rejected with an error naming the
    record and the field; nothing is dropped silently.
    """
    design = Design.parse(design)
    records = [_check_numbers(_coerce(r)) for r in raw_records]
    if not records:
        raise EmptyDataset("dataset has no records")

    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise DuplicateId(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)

    names = tuple(records[0].covariates)
    for i, rec in enumerate(records):
        if tuple(rec.covariates) != names:
            mismatch = set(names) ^ set(rec.covariates)
            if mismatch:
                raise MissingField(
                    rec.id, f"cov_{sorted(mismatch)[0]}", "breaks the covariate schema"
                )
            rec_cov = {k: rec.covariates[k] for k in names}
            records[i] = replace(rec, covariates=rec_cov)

    for rec in records:
        _check_design(rec, design)

    derived = tuple(_derive(r, design) for r in records)
    return Dataset(
        design=design,
        records=tuple(records),
        derived=derived,
        covariate_names=names,
    )


# -- ranks -------------------------------------------------------------------


def rank_transform(values, weights=None) -> np.ndarray:
    """Average ranks divided by ``n``, so outputs lie in ``(0, 1]``.

    With ``weights`` the ranks are taken under the weighted empirical
    distribution: a record's rank is the weight strictly below it plus the
    midpoint of its tie block, over the total weight. Unit weights reproduce
    the unweighted ranks.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("rank_transform needs at least one value")
    if not np.all(np.isfinite(v)):
        raise NonFinite("rank_transform input contains non-finite values")
    if weights is None:
        return rankdata(v, method="average") / v.size

    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != v.shape:
        raise ValueError("weights must match values in length")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValueError("weights must be finite, nonnegative, with positive sum")
    order = np.argsort(v, kind="stable")
    sv, sw = v[order], w[order]
    starts = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1]])
    counts = np.diff(np.r_[starts, sv.size])
    cum = np.r_[0.0, np.cumsum(sw)]
    below = cum[starts]
    tie = cum[starts + counts] - below
    block_rank = (below + 0.5 * (tie + tie / counts)) / cum[-1]
    out = np.empty_like(v)
    out[order] = np.repeat(block_rank, counts)
    return out
