"""Kernel used for rank-localised regressions."""

from __future__ import annotations

import numpy as np


def epanechnikov(u):
    """``0.75 * (1 - u**2)`` on ``|u| < 1`` and zero elsewhere.

    Accepts scalars or arrays; returns the same shape.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("kernel argument must be finite")
    out = np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)
    return float(out) if out.ndim == 0 else out


def rank_kernel_weights(ranks, center: float, bandwidth: float):
    """Kernel weights of ``ranks`` around ``center`` for a share-of-data
    bandwidth: positive weight on the open interval of width ``bandwidth``."""
    return epanechnikov((np.asarray(ranks, dtype=float) - center) / (bandwidth / 2.0))
