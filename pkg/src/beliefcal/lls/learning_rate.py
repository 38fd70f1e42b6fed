"""Ways to obtain the learning rate that local regressions condition on."""

from __future__ import annotations

import numpy as np

from ..datamodel import Dataset, Design, rank_transform
from ..errors import (
    DegenerateSmoothing,
    MissingPriorVariance,
    PredictionRankDeficient,
    ZeroExposure,
)
from ..regress import RANK_TOL

__all__ = [
    "learning_rate_raw",
    "raw_alpha_array",
    "learning_rate_smoothed",
    "kernel_ratio",
    "infer_alpha_passive",
]

SMOOTHING_DENOM_TOL = 1e-12


def learning_rate_raw(prior: float, posterior: float, signal: float) -> float:
    """Share of the gap between prior and signal closed by the update.

    May be negative or exceed one; trimming deals with such values later.
    """
    if signal == prior:
        raise ZeroExposure("signal equals prior; the learning rate is undefined")
    return (posterior - prior) / (signal - prior)


def raw_alpha_array(ds: Dataset) -> np.ndarray:
    """Raw learning rate per record; NaN where no signal was seen or the
    signal coincides with the prior."""
    gap = ds.signal - ds.prior
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(gap != 0, (ds.posterior - ds.prior) / np.where(gap != 0, gap, 1.0), np.nan)
    out[np.isnan(gap)] = np.nan
    return out


def kernel_ratio(index, num, den, bandwidth: float, weights=None):
    """For every point ``i`` return ``sum_j k_ij num_j / sum_j k_ij den_j``.

    ``k_ij`` is the Epanechnikov weight of ``index_j`` around ``index_i`` with
    half-width ``bandwidth / 2``, times ``weights_j``. Kernel sums over the
    sorted index come from prefix sums of the expanded quadratic, so the cost
    is ``O(n log n)``. Ratios whose denominator magnitude is below ``1e-12``
    come back as NaN.
    """
    index = np.asarray(index, dtype=float)
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    w = np.ones_like(index) if weights is None else np.asarray(weights, dtype=float)
    b = bandwidth / 2.0
    order = np.argsort(index, kind="stable")
    r = index[order]
    lo = np.searchsorted(r, r - b, side="right")
    hi = np.searchsorted(r, r + b, side="left")

    def window_sums(v):
        # sum over the window of v * (1 - ((r_j - c) / b)**2), c = r_i
        parts = []
        for p in range(3):
            cs = np.concatenate([[0.0], np.cumsum(v * r**p)])
            parts.append(cs[hi] - cs[lo])
        s0, s1, s2 = parts
        return 0.75 * (s0 - (s2 - 2 * r * s1 + r * r * s0) / (b * b))

    top = window_sums((w * num)[order])
    bottom = window_sums((w * den)[order])
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(np.abs(bottom) >= SMOOTHING_DENOM_TOL, top / bottom, np.nan)
    out = np.empty_like(ratio)
    out[order] = ratio
    return out


def learning_rate_smoothed(ds: Dataset, smoothing_bandwidth: float, weights=None,
                           index=None) -> np.ndarray:
    """Kernel-smoothed learning rate: a local ratio of belief updates to
    exposures.

    Parameters
    ----------
    ds
        Active-design dataset.
    smoothing_bandwidth
        Share of the sample that receives positive weight around each point.
    weights
        Optional bootstrap weights multiplying the kernel.
    index
        Smoothing index per record. Defaults to the rank of the raw learning
        rate among records where it is defined.

    Returns
    -------
    numpy.ndarray
        Smoothed rate per record; NaN for records without a defined raw rate
        or with a vanishing kernel denominator.
    """
    if ds.design is not Design.ACTIVE:
        raise ValueError("smoothed learning rates need an active design")
    if not 0 < smoothing_bandwidth <= 1:
        raise ValueError("smoothing_bandwidth must lie in (0, 1]")
    raw = raw_alpha_array(ds)
    ok = np.isfinite(raw)
    w = np.ones(ds.n) if weights is None else np.asarray(weights, dtype=float)
    ok &= w > 0
    out = np.full(ds.n, np.nan)
    if not ok.any():
        raise DegenerateSmoothing("no record has a defined learning rate")
    if index is None:
        idx_vals = rank_transform(raw[ok], w[ok])
    else:
        idx_vals = np.asarray(index, dtype=float)[ok]
    update = (ds.posterior - ds.prior)[ok]
    exposure = (ds.signal - ds.prior)[ok]
    out[ok] = kernel_ratio(idx_vals, update, exposure, smoothing_bandwidth, w[ok])
    if not np.isfinite(out).any():
        raise DegenerateSmoothing("every kernel-weighted exposure vanishes")
    return out


def infer_alpha_passive(ds: Dataset, mode: str = "prior_var_rank", weights=None,
                        trim_exposure_sq: float = 0.0) -> np.ndarray:
    """Conditioning variable for passive designs, where controls see no signal.

    ``mode="prior_var_rank"`` returns the rank of the prior variance, which
    orders learning rates when signal noise is common. ``mode="predicted"``
    fits a linear prediction of the observed learning rate on the covariates
    (plus a constant) among treated records whose squared exposure exceeds
    ``trim_exposure_sq`` and returns fitted values for every record.
    """
    if ds.design is not Design.PASSIVE:
        raise ValueError("infer_alpha_passive needs a passive design")
    w = np.ones(ds.n) if weights is None else np.asarray(weights, dtype=float)
    if mode == "prior_var_rank":
        pv = ds.prior_var
        if np.any(np.isnan(pv)):
            bad = ds.ids[int(np.flatnonzero(np.isnan(pv))[0])]
            raise MissingPriorVariance(f"record {bad!r} has no prior_var")
        return rank_transform(pv, weights)
    if mode != "predicted":
        raise ValueError(f"unknown mode {mode!r}")
    k = len(ds.covariate_names)
    if k == 0:
        raise PredictionRankDeficient("predicted learning rates need covariates")
    raw = raw_alpha_array(ds)
    e = ds.exposure
    fit_rows = (ds.treat == 1) & np.isfinite(raw) & (e * e > trim_exposure_sq) & (w > 0)
    design = np.column_stack([np.ones(ds.n), ds.covariates])
    if fit_rows.sum() <= k:
        raise PredictionRankDeficient(
            f"{int(fit_rows.sum())} usable treated record(s) for {k + 1} coefficients"
        )
    sw = np.sqrt(w[fit_rows])
    a = design[fit_rows] * sw[:, None]
    coef, _, rank, sv = np.linalg.lstsq(a, raw[fit_rows] * sw, rcond=None)
    if rank < k + 1 or sv[-1] <= RANK_TOL * sv[0]:
        raise PredictionRankDeficient("covariates are collinear among treated records")
    return design @ coef
