"""Rank-localised regressions and their aggregation into APE and CAPE.

The conditioning variable (learning rate, its proxy, or the belief update in
panels) is rank transformed on the retained sample. Around each center rank
``c`` a record gets kernel weight ``K((R - c) / (h / 2))`` so that a share
``h`` of the sample receives positive weight. All centers are evaluated in
padded batches through :func:`beliefcal.regress.fwl_batch`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..datamodel import Dataset, Design, EstimateResult, rank_transform
from ..errors import (
    AllPointsSkipped,
    ConfigError,
    InsufficientNeighborhood,
    MissingCounterfactualSignal,
    NoZeroUpdateGroup,
    RankDeficient,
    TooManySkipped,
)
from ..regress import compress_rows, fwl_batch
from .kernel import epanechnikov
from .learning_rate import infer_alpha_passive, learning_rate_smoothed, raw_alpha_array
from .trimming import trim

__all__ = [
    "ALPHA_SOURCES",
    "LlsConfig",
    "LocalProblem",
    "CapeCurve",
    "prepare",
    "evaluate_centers",
    "local_cape_point",
    "local_estimates",
    "estimate_ape",
    "estimate_cape",
    "cape_vector",
    "conditioning_alpha",
    "expected_alpha_rank",
    "LocalEstimates",
]

ALPHA_SOURCES = ("raw", "smoothed", "predicted", "prior_var_rank")

# skip codes
OK, THIN, COLLINEAR = 0, 1, 2


@dataclass(frozen=True)
class LlsConfig:
    """Tuning of the local least squares estimator.

    ``alpha_source=None`` picks ``raw`` for active and ``prior_var_rank`` for
    passive designs. ``reweight="auto"`` applies inverse squared exposure
    weights in passive designs and in active designs whose signal gap varies
    across people; ``True``/``False`` force the choice.
    """

    bandwidth: float = 0.05
    trim_delta: float = 0.025
    trim_alpha: float = 0.0
    trim_exposure_sq: float = 0.01
    alpha_source: str | None = None
    smoothing_bandwidth: float | None = None
    cape_bins: int = 10
    grid: str = "at_observations"
    group_controls: bool = False
    reweight: bool | str = "auto"
    max_skip_fraction: float = 0.2
    batch_floats: int = 160_000

    def __post_init__(self):
        if not 0 < self.bandwidth <= 1:
            raise ConfigError("bandwidth must lie in (0, 1]")
        if self.smoothing_bandwidth is not None and not 0 < self.smoothing_bandwidth <= 1:
            raise ConfigError("smoothing_bandwidth must lie in (0, 1]")
        if int(self.cape_bins) != self.cape_bins or self.cape_bins < 1:
            raise ConfigError("cape_bins must be a positive integer")
        if self.trim_delta < 0 or self.trim_exposure_sq < 0:
            raise ConfigError("trimming thresholds must be nonnegative")
        if self.alpha_source is not None and self.alpha_source not in ALPHA_SOURCES:
            raise ConfigError(
                f"alpha_source must be one of {', '.join(ALPHA_SOURCES)}"
            )
        if self.grid != "at_observations":
            raise ConfigError("only grid = 'at_observations' is supported")
        if self.reweight not in ("auto", True, False):
            raise ConfigError("reweight must be 'auto', true or false")
        if not 0 <= self.max_skip_fraction <= 1:
            raise ConfigError("max_skip_fraction must lie in [0, 1]")

    def source_for(self, design: Design) -> str | None:
        if design is Design.PANEL:
            return None
        if self.alpha_source is not None:
            return self.alpha_source
        return "raw" if design is Design.ACTIVE else "prior_var_rank"


@dataclass
class LocalProblem:
    """Retained sample arranged for batched local regressions.

    Rows are sorted by ``(side, rank)``; ``side`` is the sign of the belief
    update in panels and zero otherwise. ``zero_block`` holds the compressed
    rows of the panel comparison group, appended to every neighborhood.
    """

    design: Design
    bandwidth: float
    indices: np.ndarray  # dataset positions of retained rows, in sorted order
    rank: np.ndarray
    side: np.ndarray
    x: np.ndarray
    y: np.ndarray
    controls: np.ndarray
    row_weight: np.ndarray  # bootstrap weight times exposure weight
    avg_weight: np.ndarray  # bootstrap weight only
    zero_block: np.ndarray | None = None
    n_zero: int = 0
    n_retained: int = 0
    excluded: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CapeCurve:
    """Conditional effects by equal-width bins of the conditioning rank."""

    design: Design
    bandwidth: float
    grid: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    n_local: np.ndarray
    ape: float
    skipped_points: int = 0

    def with_se(self, se) -> "CapeCurve":
        return replace(self, se=np.asarray(se, dtype=float))

    def rows(self):
        for g, e, s, n in zip(self.grid, self.estimate, self.se, self.n_local):
            yield float(g), float(e), float(s), int(n)


# -- preparation -------------------------------------------------------------


def _varies(v: np.ndarray) -> bool:
    v = v[np.isfinite(v)]
    return v.size > 0 and np.ptp(v) > 0


def _one_hot(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=object)
    levels = sorted(set(labels.tolist()), key=str)
    return np.column_stack([(labels == lev).astype(float) for lev in levels])


def conditioning_alpha(ds: Dataset, config: LlsConfig, weights=None):
    """Learning-rate values used for trimming and ranking, per record."""
    source = config.source_for(ds.design)
    if ds.design is Design.ACTIVE:
        if source == "raw":
            return raw_alpha_array(ds), source
        if source == "smoothed":
            bw = config.smoothing_bandwidth or config.bandwidth
            return learning_rate_smoothed(ds, bw, weights), source
        raise ConfigError(f"alpha_source {source!r} is not available for active designs")
    if source == "prior_var_rank":
        return infer_alpha_passive(ds, "prior_var_rank", weights), source
    if source == "predicted":
        alpha = infer_alpha_passive(ds, "predicted", weights, config.trim_exposure_sq)
        return alpha, source
    raise ConfigError(
        f"alpha_source {source!r} is not available for passive designs; "
        "control records never reveal their learning rate"
    )


def prepare(ds: Dataset, config: LlsConfig, weights=None, indices=None,
            alpha=None) -> LocalProblem:
    """Trim, rank and assemble the regression inputs.

    ``indices`` replaces the trimming step with an explicit retained set.
    ``alpha`` supplies fixed conditioning values (one per record, NaN where
    unknown) instead of computing them from the data and ``weights``.
    """
    w = np.ones(ds.n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (ds.n,):
        raise ValueError(f"weights have shape {w.shape}, expected ({ds.n},)")

    if ds.design is Design.PANEL:
        cond, trim_alpha = ds.delta_x, None
    else:
        if ds.design is Design.PASSIVE and np.any(np.isnan(ds.exposure)):
            bad = ds.ids[int(np.flatnonzero(np.isnan(ds.exposure))[0])]
            raise MissingCounterfactualSignal(
                f"record {bad!r} lacks signal_high; passive local regressions need it"
            )
        if alpha is None:
            cond, source = conditioning_alpha(ds, config, weights)
        else:
            cond, source = np.asarray(alpha, dtype=float), "given"
            if cond.shape != (ds.n,):
                raise ValueError(f"alpha has shape {cond.shape}, expected ({ds.n},)")
        trim_alpha = None if source == "prior_var_rank" else cond

    if indices is None:
        tr = trim(ds, config, trim_alpha)
        keep, excluded = tr.indices, tr.excluded
    else:
        keep, excluded = np.asarray(indices, dtype=int), {}
    keep = keep[w[keep] > 0]
    if keep.size == 0:
        raise InsufficientNeighborhood("no retained record has positive weight")

    if config.group_controls and any(g is None for g in ds.groups[keep]):
        raise ConfigError("group controls need a group label on every record")

    if ds.design is Design.PANEL:
        return _prepare_panel(ds, config, w, keep, excluded)

    x = ds.posterior[keep]
    y = ds.outcome_post[keep]
    cols = [np.ones(keep.size), ds.prior[keep]]
    s_high = ds.signal_high[keep]
    s_low = ds.signal_low[keep]
    if np.all(np.isfinite(s_high)) and _varies(s_high):
        cols.append(s_high)
    if ds.design is Design.ACTIVE and np.all(np.isfinite(s_low)) and _varies(s_low):
        cols.append(s_low)
    controls = np.column_stack(cols)
    if config.group_controls:
        controls = np.column_stack([controls, _one_hot(ds.groups[keep])])

    if ds.design is Design.ACTIVE:
        gap = ds.signal_high[keep] - ds.signal_low[keep]
        auto = np.all(np.isfinite(gap)) and _varies(gap)
    else:
        gap = ds.exposure[keep]
        auto = True
    use = auto if config.reweight == "auto" else bool(config.reweight)
    if use:
        if not np.all(np.isfinite(gap)) or np.any(gap == 0):
            raise ConfigError("exposure reweighting needs a nonzero exposure on every record")
        exp_w = gap ** -2.0
    else:
        exp_w = np.ones(keep.size)

    rank = rank_transform(cond[keep], w[keep])
    order = np.argsort(rank, kind="stable")
    return LocalProblem(
        design=ds.design,
        bandwidth=config.bandwidth,
        indices=keep[order],
        rank=rank[order],
        side=np.zeros(keep.size, dtype=int),
        x=x[order],
        y=y[order],
        controls=controls[order],
        row_weight=(w[keep] * exp_w)[order],
        avg_weight=w[keep][order],
        n_retained=int(keep.size),
        excluded=excluded,
    )


def _prepare_panel(ds, config, w, keep, excluded) -> LocalProblem:
    dx = ds.delta_x[keep]
    dy = ds.delta_y[keep]
    zero = dx == 0
    if not zero.any():
        raise NoZeroUpdateGroup("no retained record has an unchanged belief")
    nz = ~zero
    if not nz.any():
        raise InsufficientNeighborhood("every retained belief update is zero")

    def control_block(mask):
        cols = [np.ones(mask.sum())]
        if config.group_controls:
            cols.append(_one_hot(ds.groups[keep])[mask])
        return np.column_stack(cols)

    sw0 = np.sqrt(w[keep][zero])
    zblock = np.column_stack([
        control_block(zero),
        np.zeros(zero.sum()),
        dy[zero],
    ]) * sw0[:, None]
    zblock = compress_rows(zblock)

    idx = keep[nz]
    rank = rank_transform(dx[nz], w[idx])
    side = np.sign(dx[nz]).astype(int)
    order = np.lexsort((rank, side))
    return LocalProblem(
        design=ds.design,
        bandwidth=config.bandwidth,
        indices=idx[order],
        rank=rank[order],
        side=side[order],
        x=dx[nz][order],
        y=dy[nz][order],
        controls=control_block(nz)[order],
        row_weight=w[idx][order],
        avg_weight=w[idx][order],
        zero_block=zblock,
        n_zero=int(zero.sum()),
        n_retained=int(keep.size),
        excluded=excluded,
    )


# -- evaluation --------------------------------------------------------------


def evaluate_centers(prob: LocalProblem, centers, sides=None, batch_floats: int = 160_000):
    """Local coefficient at each center rank.

    Returns ``(estimate, n_local, status)`` arrays; ``status`` is ``OK``,
    ``THIN`` (fewer than two weighted rows or no variation in the regressor)
    or ``COLLINEAR`` (regressor in the span of the controls).
    """
    centers = np.asarray(centers, dtype=float)
    sides = np.zeros(centers.size, dtype=int) if sides is None else np.asarray(sides, dtype=int)
    half = prob.bandwidth / 2.0
    nrow = prob.rank.size
    est = np.full(centers.size, np.nan)
    n_local = np.zeros(centers.size, dtype=int)
    status = np.full(centers.size, THIN, dtype=int)

    # window bounds in the (side, rank) sort order
    lo = np.empty(centers.size, dtype=int)
    hi = np.empty(centers.size, dtype=int)
    for s in np.unique(sides):
        seg = np.flatnonzero(prob.side == s)
        sel = sides == s
        if seg.size == 0:
            lo[sel] = hi[sel] = 0
            continue
        r = prob.rank[seg]
        lo[sel] = seg[0] + np.searchsorted(r, centers[sel] - half, side="right")
        hi[sel] = seg[0] + np.searchsorted(r, centers[sel] + half, side="left")

    width = hi - lo
    # every retained row has positive weight, so a window is usable when it
    # holds two rows and the regressor changes somewhere inside it
    pos = np.concatenate([[0], np.cumsum(prob.row_weight > 0)])
    npos = pos[hi] - pos[lo]
    change = np.concatenate([[0, 0], np.cumsum(prob.x[1:] != prob.x[:-1])])
    varies = (change[np.maximum(hi, lo + 1)] - change[lo + 1]) > 0
    if prob.zero_block is not None:
        npos = npos + prob.n_zero
        varies = varies | (width > 0)
    n_local[:] = npos
    usable = (npos >= 2) & varies

    z = np.column_stack([prob.controls, prob.x, prob.y])
    p = z.shape[1]
    todo = np.flatnonzero(usable)
    order = todo[np.argsort(width[todo], kind="stable")]
    start = 0
    while start < order.size:
        # grow the batch while the padded block fits the float budget
        stop = start + 1
        while stop < order.size and (stop - start + 1) * width[order[stop]] * p <= batch_floats:
            stop += 1
        batch = order[start:stop]
        m = int(width[batch[-1]])
        coef, ident = _evaluate_batch(prob, z, centers[batch], lo[batch], hi[batch], m, half)
        est[batch] = np.where(ident, coef, np.nan)
        status[batch] = np.where(ident, OK, COLLINEAR)
        start = stop
    return est, n_local, status


def _evaluate_batch(prob, z, centers, lo, hi, m, half):
    """Kernel-weighted regressions for one batch of windows.

    Each padded window is reduced to the triangular factor of its weighted
    rows, which has the same cross products; the partialling-out step then
    runs on these small factors.
    """
    nrow, p = z.shape
    k = p - 2
    offs = np.arange(m)
    inside = offs[None, :] < (hi - lo)[:, None]
    rows = np.minimum(lo[:, None] + offs[None, :], nrow - 1)
    u = (prob.rank[rows] - centers[:, None]) / half
    wt = np.where(inside, 0.75 * (1.0 - u * u), 0.0) * prob.row_weight[rows]
    zb = z[rows]
    zb *= np.sqrt(wt)[..., None]
    r = np.linalg.qr(zb, mode="r")
    if prob.zero_block is not None:
        zero = np.broadcast_to(prob.zero_block, (r.shape[0],) + prob.zero_block.shape)
        r = np.concatenate([r, zero], axis=1)
    return fwl_batch(r[..., k], r[..., k + 1], r[..., :k])


def local_cape_point(ds: Dataset, indices, center_rank: float, config: LlsConfig,
                     weights=None, side: int = 1) -> tuple[float, int]:
    """Local coefficient on the belief (panel: belief update) at one rank.

    Parameters
    ----------
    ds
        Dataset.
    indices
        Retained records, usually from :func:`~beliefcal.lls.trim`; ``None``
        applies the configured trimming.
    center_rank
        Center of the kernel on the rank scale of the retained sample.
    side
        Panel only: sign of the updates pooled with the zero-update group.

    Raises
    ------
    InsufficientNeighborhood, RankDeficient
    """
    prob = prepare(ds, config, weights, indices)
    s = int(np.sign(side)) if ds.design is Design.PANEL else 0
    est, n_local, status = evaluate_centers(prob, [center_rank], [s])
    if status[0] == THIN:
        raise InsufficientNeighborhood(
            f"neighborhood at rank {center_rank:.4g} has {n_local[0]} weighted row(s) "
            "or no variation in the regressor"
        )
    if status[0] == COLLINEAR:
        raise RankDeficient(f"regressor collinear with controls at rank {center_rank:.4g}")
    return float(est[0]), int(n_local[0])


@dataclass(frozen=True)
class LocalEstimates:
    """Local estimate at every retained observation's own rank."""

    problem: LocalProblem
    estimate: np.ndarray
    n_local: np.ndarray
    status: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK


def local_estimates(ds: Dataset, config: LlsConfig, weights=None, alpha=None) -> LocalEstimates:
    prob = prepare(ds, config, weights, alpha=alpha)
    if prob.rank.size == 0:
        raise AllPointsSkipped("no observation to center a local regression on")
    # one regression per distinct (side, rank)
    key = np.stack([prob.side, prob.rank])
    uniq, inverse = np.unique(key, axis=1, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    est, n_local, status = evaluate_centers(
        prob, uniq[1], uniq[0].astype(int), config.batch_floats
    )
    return LocalEstimates(prob, est[inverse], n_local[inverse], status[inverse])


def _check_skips(le: LocalEstimates, config: LlsConfig) -> int:
    skipped = int((~le.ok).sum())
    total = le.ok.size
    if skipped == total:
        raise AllPointsSkipped(f"all {total} local regressions failed")
    if skipped > config.max_skip_fraction * total:
        raise TooManySkipped(
            f"{skipped} of {total} local regressions failed "
            f"(limit {config.max_skip_fraction:.0%})"
        )
    return skipped


def _ape(le: LocalEstimates) -> float:
    ok = le.ok
    return float(np.average(le.estimate[ok], weights=le.problem.avg_weight[ok]))


def estimate_ape(ds: Dataset, config: LlsConfig | None = None, weights=None,
                 alpha=None) -> EstimateResult:
    """Average of local estimates centered at each retained observation.

    Each observation counts once (times its bootstrap weight); observations
    whose local regression fails are left out and counted in
    ``skipped_points``. ``alpha`` optionally fixes the conditioning values.
    """
    config = config or LlsConfig()
    le = local_estimates(ds, config, weights, alpha)
    skipped = _check_skips(le, config)
    return EstimateResult(
        estimator="lls_ape",
        point=_ape(le),
        bandwidth=config.bandwidth,
        n_total=ds.n,
        n_used=le.problem.n_retained,
        skipped_points=skipped,
    )


def _bin_of(rank: np.ndarray, bins: int) -> np.ndarray:
    return np.clip(np.ceil(rank * bins).astype(int) - 1, 0, bins - 1)


def cape_vector(ds: Dataset, config: LlsConfig, weights=None, alpha=None) -> np.ndarray:
    """Bin estimates followed by the APE, as one vector (NaN for empty bins).

    This is the statistic resampled by the bootstrap for CAPE bands.
    """
    le = local_estimates(ds, config, weights, alpha)
    _check_skips(le, config)
    est, _ = _bin_means(le, config.cape_bins)
    return np.append(est, _ape(le))


def _bin_means(le: LocalEstimates, bins: int):
    ok = le.ok
    b = _bin_of(le.problem.rank[ok], bins)
    w = le.problem.avg_weight[ok]
    num = np.bincount(b, weights=w * le.estimate[ok], minlength=bins)
    den = np.bincount(b, weights=w, minlength=bins)
    count = np.bincount(b, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        est = np.where(den > 0, num / den, np.nan)
    return est, count


def estimate_cape(ds: Dataset, config: LlsConfig | None = None, weights=None,
                  alpha=None) -> CapeCurve:
    """CAPE curve over equal-width bins of the conditioning rank.

    Bins with fewer than two contributing observations are omitted; standard
    errors are NaN until attached by the bootstrap.
    """
    config = config or LlsConfig()
    le = local_estimates(ds, config, weights, alpha)
    skipped = _check_skips(le, config)
    est, count = _bin_means(le, config.cape_bins)
    grid = (np.arange(config.cape_bins) + 0.5) / config.cape_bins
    keep = count >= 2
    if not keep.any():
        raise AllPointsSkipped("no CAPE bin has two or more local estimates")
    return CapeCurve(
        design=ds.design,
        bandwidth=config.bandwidth,
        grid=grid[keep],
        estimate=est[keep],
        se=np.full(int(keep.sum()), np.nan),
        n_local=count[keep],
        ape=_ape(le),
        skipped_points=skipped,
    )


def expected_alpha_rank(ds: Dataset, grid, bandwidth: float = 0.1) -> np.ndarray:
    """Relabel a prior-variance-rank axis by the expected learning-rate rank.

    For passive designs conditioned on the prior-variance rank, returns at
    each grid point the kernel-weighted mean rank of the raw learning rate
    among treated records, so that curves can be drawn on a learning-rate
    scale. Estimates are unchanged.
    """
    raw = raw_alpha_array(ds)
    treated = (ds.treat == 1) & np.isfinite(raw) & np.isfinite(ds.prior_var)
    if treated.sum() < 2:
        raise InsufficientNeighborhood("too few treated records with a learning rate")
    pv_rank = rank_transform(ds.prior_var[treated])
    a_rank = rank_transform(raw[treated])
    out = []
    for g in np.asarray(grid, dtype=float):
        k = epanechnikov((pv_rank - g) / (bandwidth / 2.0))
        out.append(np.average(a_rank, weights=k) if k.sum() > 0 else np.nan)
    return np.asarray(out)
