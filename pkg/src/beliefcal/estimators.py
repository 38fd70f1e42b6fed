"""Standard estimators: panel first differences, Wald/TSLS, exposure TSLS,
the reduced form, sign-split TSLS, and the implicit weights each one places
on individual belief effects.

Every estimator accepts optional per-record ``weights`` (used by the
bootstrap); they multiply all means and regression weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset, Design, EstimateResult
from .errors import (
    EmptySplit,
    MissingAlpha,
    MissingCounterfactualSignal,
    RankDeficient,
    SingleArm,
    WeakFirstStage,
    ZeroVariance,
)
from .regress import RegressionSpec, wls_fit

__all__ = [
    "FIRST_STAGE_TOL",
    "WeightTable",
    "panel_fd",
    "wald_active",
    "first_stage",
    "reduced_form",
    "tsls_passive_exposure",
    "split_membership",
    "tsls_split",
    "implied_weights",
]

FIRST_STAGE_TOL = 1e-12


def _require(ds: Dataset, *designs: Design, name: str):
    if ds.design not in designs:
        allowed = ", ".join(d.value for d in designs)
        raise ValueError(f"{name} needs a {allowed} design, got {ds.design.value}")


def _weights(ds: Dataset, weights) -> np.ndarray:
    if weights is None:
        return np.ones(ds.n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (ds.n,):
        raise ValueError(f"weights have shape {w.shape}, expected ({ds.n},)")
    return w


def _arm_means(values: np.ndarray, treat: np.ndarray, w: np.ndarray):
    a = (treat == 1) & (w > 0)
    b = (treat == 0) & (w > 0)
    if not a.any() or not b.any():
        raise SingleArm("both arms need at least one record")
    return (
        np.average(values[a], weights=w[a]),
        np.average(values[b], weights=w[b]),
    )


def _result(name, point, ds, n_used, **kw) -> EstimateResult:
    return EstimateResult(estimator=name, point=float(point), n_total=ds.n,
                          n_used=int(n_used), **kw)


def panel_fd(ds: Dataset, weights=None) -> EstimateResult:
    """Slope of the belief-update regression ``dY = a + b dX``."""
    _require(ds, Design.PANEL, name="panel_fd")
    w = _weights(ds, weights)
    data = {"dy": ds.delta_y, "dx": ds.delta_x, "w": w}
    try:
        fit = wls_fit(data, RegressionSpec("dy", "dx", weights="w"))
    except RankDeficient:
        raise ZeroVariance("belief updates do not vary") from None
    return _result("panel_fd", fit.coef, ds, fit.n)


def reduced_form(ds: Dataset, weights=None) -> EstimateResult:
    """Difference in mean outcomes between arms A and B."""
    _require(ds, Design.ACTIVE, Design.PASSIVE, name="reduced_form")
    w = _weights(ds, weights)
    ya, yb = _arm_means(ds.outcome_post, ds.treat, w)
    return _result("reduced_form", ya - yb, ds, int((w > 0).sum()))


def first_stage(ds: Dataset, weights=None) -> float:
    """Difference in mean posterior beliefs between arms A and B."""
    w = _weights(ds, weights)
    xa, xb = _arm_means(ds.posterior, ds.treat, w)
    return float(xa - xb)


def wald_active(ds: Dataset, weights=None) -> EstimateResult:
    """Reduced form divided by the first stage."""
    _require(ds, Design.ACTIVE, Design.PASSIVE, name="wald_active")
    w = _weights(ds, weights)
    ya, yb = _arm_means(ds.outcome_post, ds.treat, w)
    xa, xb = _arm_means(ds.posterior, ds.treat, w)
    fs = xa - xb
    if abs(fs) < FIRST_STAGE_TOL:
        raise WeakFirstStage(f"first stage {fs:.3g} is numerically zero")
    return _result("wald", (ya - yb) / fs, ds, int((w > 0).sum()))


def tsls_passive_exposure(ds: Dataset, weights=None) -> EstimateResult:
    """TSLS with the recentred exposure instrument ``(T - mean T) * (S(A) - X0)``.

    ``mean T`` is the (weighted) sample treated share, so the instrument is
    orthogonal to the constant in sample.
    """
    _require(ds, Design.PASSIVE, name="tsls_exposure")
    w = _weights(ds, weights)
    e = ds.exposure
    pos = w > 0
    if np.any(np.isnan(e[pos])):
        bad = np.asarray(ds.ids)[pos][np.isnan(e[pos])][0]
        raise MissingCounterfactualSignal(
            f"record {bad!r} lacks signal_high; the instrument needs it for every record"
        )
    w, e = w[pos], e[pos]
    t = ds.treat[pos]
    x = ds.posterior[pos]
    y = ds.outcome_post[pos]
    z = (t - np.average(t, weights=w)) * e
    zc = z - np.average(z, weights=w)
    cov_zx = np.average(zc * x, weights=w)
    cov_zy = np.average(zc * y, weights=w)
    if abs(cov_zx) < FIRST_STAGE_TOL:
        raise WeakFirstStage(f"instrument covariance {cov_zx:.3g} is numerically zero")
    return _result("tsls_exposure", cov_zy / cov_zx, ds, int(pos.sum()))


def split_membership(ds: Dataset, side: str, prior_available: bool = True) -> np.ndarray:
    """Boolean mask of records in a sign split.

    ``side="above"`` selects records whose prior lies above the signal
    (``S(A) < X0``), ``side="below"`` those whose prior lies below it. When
    priors are not used, the direction comes from ``S(A) - X``: controls keep
    their prior, and treated people who update partially stay on the same
    side of the signal.
    """
    if side not in ("above", "below"):
        raise ValueError("side must be 'above' or 'below'")
    ref = ds.prior if prior_available else ds.posterior
    signal = np.where(np.isnan(ds.signal_high), ds.signal, ds.signal_high)
    gap = signal - ref
    if np.any(np.isnan(gap)):
        raise MissingCounterfactualSignal("every record needs signal_high to be split")
    return gap < 0 if side == "above" else gap > 0


def tsls_split(ds: Dataset, side: str, prior_available: bool = True,
               weights=None) -> EstimateResult:
    """Wald ratio on the records on one side of the signal."""
    _require(ds, Design.PASSIVE, name="tsls_split")
    w = _weights(ds, weights)
    mask = split_membership(ds, side, prior_available) & (w > 0)
    if not mask.any():
        raise EmptySplit(f"no records on side {side!r}")
    try:
        ya, yb = _arm_means(ds.outcome_post[mask], ds.treat[mask], w[mask])
        xa, xb = _arm_means(ds.posterior[mask], ds.treat[mask], w[mask])
    except SingleArm:
        raise EmptySplit(f"side {side!r} lacks one of the arms") from None
    fs = xa - xb
    if abs(fs) < FIRST_STAGE_TOL:
        raise WeakFirstStage(f"first stage {fs:.3g} on side {side!r} is numerically zero")
    return _result(f"tsls_split_{side}", (ya - yb) / fs, ds, int(mask.sum()))


@dataclass(frozen=True)
class WeightTable:
    """Implicit weights of a standard estimator on individual effects.

    ``indices`` lists the records covered (records whose learning rate is
    unknown are left out); ``normalized`` sums to one over them.
    """

    design: Design
    source: str
    indices: np.ndarray
    ids: tuple[str, ...]
    unnormalized: np.ndarray
    normalized: np.ndarray

    def weighted_average(self, values) -> float:
        return float(np.dot(self.normalized, np.asarray(values, dtype=float)[self.indices]))


def implied_weights(ds: Dataset, alpha=None) -> WeightTable:
    """Per-record weights of the design's standard estimator.

    Parameters
    ----------
    ds
        Dataset to diagnose.
    alpha
        Learning rates: a :class:`~beliefcal.simlab.SimTruth` (source
        ``"truth"``), an array aligned with the records (``"estimated"``,
        NaN for unknown) or ``None`` to use the raw ratio of the belief update
        to the exposure wherever a signal was seen (``"raw"``). Ignored for
        panel designs, whose weights depend on belief updates only.

    Notes
    -----
    Panel weights are ``dX (dX - mean dX)``, active weights
    ``alpha (S(A) - S(B))`` and passive weights ``alpha (S(A) - X0)**2``.
    """
    if ds.design is Design.PANEL:
        dx = ds.delta_x
        raw = dx * (dx - dx.mean())
        idx = np.arange(ds.n)
        source = "updates"
    else:
        if alpha is None:
            from .lls.learning_rate import raw_alpha_array

            a = raw_alpha_array(ds)
            source = "raw"
        elif hasattr(alpha, "alpha"):
            a = np.asarray(alpha.alpha, dtype=float)
            source = "truth"
        else:
            a = np.asarray(alpha, dtype=float)
            source = "estimated"
        if a.shape != (ds.n,):
            raise ValueError(f"alpha has shape {a.shape}, expected ({ds.n},)")
        if ds.design is Design.ACTIVE:
            raw_all = a * (ds.signal_high - ds.signal_low)
        else:
            raw_all = a * ds.exposure**2
        idx = np.flatnonzero(np.isfinite(raw_all))
        if idx.size == 0:
            raise MissingAlpha("no record has both a learning rate and signals")
        raw = raw_all[idx]
    total = raw.sum()
    if total == 0:
        raise ZeroVariance("implied weights sum to zero")
    return WeightTable(
        design=ds.design,
        source=source,
        indices=idx,
        ids=tuple(ds.ids[i] for i in idx),
        unnormalized=raw,
        normalized=raw / total,
    )
