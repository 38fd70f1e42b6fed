"""Weighted least squares with categorical controls.

All fits go through an orthogonal factorisation of the control block followed
by a singular value decomposition of its small triangular factor, so that
collinear controls are dropped gracefully while a regressor of interest with
no variation left after partialling out the controls is reported as
:class:`RankDeficient` instead of producing a meaningless number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientRows, NotBinary, RankDeficient

__all__ = [
    "RANK_TOL",
    "RegressionSpec",
    "WlsResult",
    "wls_fit",
    "binary_contrast",
    "dummy_matrix",
    "fwl_batch",
    "compress_rows",
]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RegressionSpec:
    """Which columns play which role in a weighted regression.

    ``weights`` names a column of nonnegative row weights; ``None`` means unit
    weights. Column references are keys into the mapping passed to
    :func:`wls_fit`.
    """

    response: str
    regressor: str
    linear_controls: tuple[str, ...] = ()
    categorical_controls: tuple[str, ...] = ()
    weights: str | None = None
    include_intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "linear_controls", tuple(self.linear_controls))
        object.__setattr__(self, "categorical_controls", tuple(self.categorical_controls))
        controls = self.linear_controls + self.categorical_controls
        if self.regressor in controls:
            raise ValueError(f"regressor {self.regressor!r} also listed as a control")
        if self.response == self.regressor:
            raise ValueError("response and regressor must differ")


@dataclass(frozen=True)
class WlsResult:
    coef: float
    coefs: dict[str, float]
    n: int
    rank: int


def dummy_matrix(labels, name: str = "g") -> tuple[np.ndarray, list[str]]:
    """Indicator columns for every level except the first in sorted order."""
    labels = np.asarray(labels, dtype=object)
    levels = sorted(set(labels.tolist()), key=str)
    cols = levels[1:]
    if not cols:
        return np.empty((len(labels), 0)), []
    mat = np.column_stack([(labels == lev).astype(float) for lev in cols])
    return mat, [f"{name}[{lev}]" for lev in cols]


def _control_basis(cw: np.ndarray, tol: float = RANK_TOL):
    """Orthonormal basis of the column space of a batch of control blocks.

    ``cw`` has shape ``(B, m, k)``. Returns a ``(B, m, k)`` array whose
    columns beyond each block's numerical rank are zeroed, plus the ranks.
    """
    b, m, k = cw.shape
    if k == 0:
        return np.zeros((b, m, 0)), np.zeros(b, dtype=int)
    if m < k:
        cw = np.concatenate([cw, np.zeros((b, k - m, k))], axis=1)
    q, r = np.linalg.qr(cw)
    u, s, _ = np.linalg.svd(r)
    smax = s[:, :1]
    keep = (s > tol * smax) & (smax > 0)
    basis = np.matmul(q, u) * keep[:, None, :]
    if m < k:
        basis = basis[:, :m, :]
    return basis, keep.sum(axis=1)


def fwl_batch(x: np.ndarray, y: np.ndarray, c: np.ndarray, tol: float = RANK_TOL):
    """Coefficient on ``x`` in batches of regressions of ``y`` on ``[x, c]``.

    Inputs are already scaled by the square root of the row weights:
    ``x`` and ``y`` have shape ``(B, m)``, ``c`` has shape ``(B, m, k)``.
    Zero rows act as padding. Returns ``(coef, identified)``; ``coef`` is NaN
    where ``x`` is (numerically) in the span of the controls.
    """
    basis, _ = _control_basis(c, tol)

    def residual(v):
        return v - np.einsum("bmk,bk->bm", basis, np.einsum("bmk,bm->bk", basis, v))

    # a second pass restores orthogonality lost to cancellation
    xt = residual(residual(x))
    yt = residual(y)
    xx = np.einsum("bm,bm->b", xt, xt)
    scale = np.einsum("bm,bm->b", x, x)
    identified = xx > (tol * tol) * scale
    identified &= scale > 0
    num = np.einsum("bm,bm->b", xt, yt)
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = np.where(identified, num / np.where(identified, xx, 1.0), np.nan)
    return coef, identified


def compress_rows(block: np.ndarray) -> np.ndarray:
    """Replace a row block by a square factor with the same Gram matrix.

    Regressions only see the data through cross products, so a fixed block of
    rows shared by many regressions can be stored as its triangular factor.
    """
    if block.shape[0] <= block.shape[1]:
        return block
    return np.linalg.qr(block, mode="r")


def _column(data: Mapping[str, Sequence], name: str, n: int | None = None):
    if name not in data:
        raise KeyError(f"column {name!r} not found")
    col = np.asarray(data[name])
    if n is not None and col.shape[0] != n:
        raise ValueError(f"column {name!r} has length {col.shape[0]}, expected {n}")
    return col


def wls_fit(data: Mapping[str, Sequence], spec: RegressionSpec) -> WlsResult:
    """Weighted least squares fit described by ``spec``.

    Parameters
    ----------
    data
        Mapping from column name to equal-length arrays. Categorical columns
        may hold any hashable labels.
    spec
        Roles of the columns.

    Returns
    -------
    WlsResult
        ``coef`` is the coefficient on ``spec.regressor``; ``coefs`` maps
        every retained column (``"(intercept)"`` for the constant and
        ``"name[level]"`` for dummies) to its coefficient. Columns dropped for
        collinearity among the controls get coefficient ``nan``.

    Raises
    ------
    InsufficientRows
        Fewer than two rows carry positive weight.
    RankDeficient
        The regressor has no variation left after partialling out controls.
    """
    y = _column(data, spec.response).astype(float)
    n = y.shape[0]
    x = _column(data, spec.regressor, n).astype(float)
    if spec.weights is None:
        w = np.ones(n)
    else:
        w = _column(data, spec.weights, n).astype(float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
    pos = w > 0
    if pos.sum() < 2:
        raise InsufficientRows(f"{int(pos.sum())} row(s) with positive weight")

    names: list[str] = []
    cols: list[np.ndarray] = []
    if spec.include_intercept:
        names.append("(intercept)")
        cols.append(np.ones(n))
    for name in spec.linear_controls:
        names.append(name)
        cols.append(_column(data, name, n).astype(float))
    for name in spec.categorical_controls:
        labels = _column(data, name, n)[pos]
        mat, dnames = dummy_matrix(labels, name)
        full = np.zeros((n, mat.shape[1]))
        full[pos] = mat
        names.extend(dnames)
        cols.extend(full.T)

    sw = np.sqrt(w[pos])
    xw = x[pos] * sw
    yw = y[pos] * sw
    cw = (np.column_stack(cols)[pos] if cols else np.empty((pos.sum(), 0))) * sw[:, None]
    if not (np.all(np.isfinite(xw)) and np.all(np.isfinite(yw)) and np.all(np.isfinite(cw))):
        raise ValueError("regression inputs must be finite on rows with positive weight")

    coef, ok = fwl_batch(xw[None], yw[None], cw[None])
    if not ok[0]:
        raise RankDeficient(
            f"{spec.regressor!r} is collinear with the controls on these rows"
        )

    # full coefficient vector: regress the partial residual on the controls
    coefs = {spec.regressor: float(coef[0])}
    if cw.shape[1]:
        resid = yw - coef[0] * xw
        sol, _, rank, sv = np.linalg.lstsq(cw, resid, rcond=RANK_TOL)
        dropped = _dropped_columns(cw)
        for j, name in enumerate(names):
            coefs[name] = float("nan") if j in dropped else float(sol[j])
        rank = int(rank) + 1
    else:
        rank = 1
    return WlsResult(coef=float(coef[0]), coefs=coefs, n=int(pos.sum()), rank=rank)


def _dropped_columns(cw: np.ndarray) -> set[int]:
    """Indices of control columns that add nothing beyond earlier columns."""
    dropped: set[int] = set()
    kept: list[int] = []
    for j in range(cw.shape[1]):
        trial = cw[:, kept + [j]]
        sv = np.linalg.svd(trial, compute_uv=False)
        if sv.size == 0 or sv[0] == 0 or sv[-1] <= RANK_TOL * sv[0]:
            dropped.add(j)
        else:
            kept.append(j)
    return dropped


def binary_contrast(y, x, weights=None) -> float:
    """Difference in (weighted) means of ``y`` between the two values of ``x``,
    divided by the gap between those values.

    Raises
    ------
    NotBinary
        ``x`` does not take exactly two distinct values on rows with
        positive weight.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    pos = w > 0
    levels = np.unique(x[pos])
    if levels.size != 2:
        raise NotBinary(f"regressor takes {levels.size} distinct value(s), need 2")
    lo, hi = levels
    m_lo = np.average(y[pos & (x == lo)], weights=w[pos & (x == lo)])
    m_hi = np.average(y[pos & (x == hi)], weights=w[pos & (x == hi)])
    return float((m_hi - m_lo) / (hi - lo))
