"""Sample restrictions away from zero updates and zero exposures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datamodel import Dataset, Design
from ..errors import AllTrimmed

__all__ = ["TrimResult", "trim"]


@dataclass(frozen=True)
class TrimResult:
    indices: np.ndarray
    excluded: dict[str, int]

    @property
    def n_retained(self) -> int:
        return int(self.indices.size)


def trim(ds: Dataset, config, alpha=None) -> TrimResult:
    """Indices retained for local regressions, with per-rule exclusion counts.

    Parameters
    ----------
    ds
        Dataset; the design selects the rules.
    config
        Object with ``trim_delta``, ``trim_alpha`` and ``trim_exposure_sq``
        (an :class:`~beliefcal.lls.LlsConfig`).
    alpha
        Learning rate per record (NaN where unknown). Required for active
        designs; for passive designs it is used only when given, since
        controls never reveal their rate.

    Notes
    -----
    Panel: drop ``0 < |dX| < trim_delta``; exact zeros stay as the
    comparison group. Active: drop records whose own signal equals their
    prior, whose learning rate is missing or ``<= trim_alpha``, or whose
    squared signal gap ``(S(A) - S(B))**2 <= trim_exposure_sq``. Passive: drop
    ``(S(A) - X0)**2 <= trim_exposure_sq`` (zero exposure included) and
    apply the learning-rate rule when ``alpha`` is supplied. A record failing
    several rules is counted under the first.
    """
    keep = np.ones(ds.n, dtype=bool)
    excluded: dict[str, int] = {}

    def rule(name, bad):
        bad = np.asarray(bad, dtype=bool) & keep
        excluded[name] = int(bad.sum())
        keep[bad] = False

    if ds.design is Design.PANEL:
        dx = np.abs(ds.delta_x)
        rule("small_update", (dx > 0) & (dx < config.trim_delta))
    elif ds.design is Design.ACTIVE:
        if alpha is None:
            raise ValueError("active trimming needs learning rates")
        a = np.asarray(alpha, dtype=float)
        rule("zero_exposure", ds.signal == ds.prior)
        rule("missing_alpha", np.isnan(a))
        with np.errstate(invalid="ignore"):
            rule("alpha", a <= config.trim_alpha)
        gap = ds.signal_high - ds.signal_low
        # the signal gap is only checked where both potential signals are recorded
        rule("exposure", np.isfinite(gap) & ~(gap * gap > config.trim_exposure_sq))
    else:
        e = ds.exposure
        rule("exposure", ~(e * e > config.trim_exposure_sq) | (e == 0))
        if alpha is not None:
            a = np.asarray(alpha, dtype=float)
            rule("missing_alpha", np.isnan(a))
            with np.errstate(invalid="ignore"):
                rule("alpha", a <= config.trim_alpha)
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        raise AllTrimmed(f"trimming removed every record ({excluded})")
    return TrimResult(indices=idx, excluded=excluded)
