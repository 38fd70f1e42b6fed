"""Bayesian bootstrap over whole estimation pipelines.

A pipeline is any callable ``pipeline(weights) -> float | array`` that runs
every estimation step with the per-record weights multiplying its regression
and averaging weights. Each record owns a random stream keyed by its id, so
standard errors do not depend on the order of records.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import BeliefcalError, ConfigError, TooManyFailures

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "dirichlet_weights",
    "bayesian_bootstrap",
    "trimmed_sd",
]


@dataclass(frozen=True)
class BootstrapConfig:
    """``outlier_drop`` is the total share of draws discarded, split equally
    between the two tails. ``mode="empirical"`` swaps Dirichlet weights for
    multinomial counts."""

    n_draws: int = 1000
    outlier_drop: float = 0.01
    seed: int = 0
    parallel: bool = False
    max_workers: int | None = None
    mode: str = "bayesian"
    chunk: int = 100

    def __post_init__(self):
        if int(self.n_draws) != self.n_draws or self.n_draws < 2:
            raise ConfigError("n_draws must be an integer >= 2")
        if not 0 <= self.outlier_drop < 0.5:
            raise ConfigError("outlier_drop must lie in [0, 0.5)")
        if self.mode not in ("bayesian", "empirical"):
            raise ConfigError("mode must be 'bayesian' or 'empirical'")
        if self.chunk < 1:
            raise ConfigError("chunk must be positive")


class BootstrapResult(NamedTuple):
    se: float | np.ndarray
    draws: np.ndarray
    n_failed: int


def _id_key(record_id: str) -> list[int]:
    digest = hashlib.blake2b(str(record_id).encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def _ids_of(data) -> tuple[str, ...]:
    ids = getattr(data, "ids", data)
    ids = tuple(str(i) for i in ids)
    if len(set(ids)) != len(ids):
        raise ValueError("bootstrap needs unique record ids")
    return ids


def dirichlet_weights(ids: Sequence[str], seed: int, n_draws: int, chunk: int = 100):
    """Yield ``(n_records,)`` weight vectors, one per draw, in draw order.

    Each vector is a Dirichlet(1, ..., 1) draw scaled to sum to the number of
    records: normalised standard exponentials. Record ``i``'s exponentials
    come from its own stream seeded by ``(seed, hash(id_i))``.
    """
    gens = [np.random.default_rng(np.random.SeedSequence([seed, *_id_key(i)])) for i in ids]
    n = len(gens)
    done = 0
    while done < n_draws:
        c = min(chunk, n_draws - done)
        e = np.empty((c, n))
        for j, g in enumerate(gens):
            e[:, j] = g.standard_exponential(c)
        for row in e:
            w = row * (n / row.sum())
            if not (np.all(w > 0) and abs(w.sum() - n) <= 1e-9 * n):
                raise AssertionError("bootstrap weights must be positive and sum to n")
            yield w
        done += c


def multinomial_weights(ids: Sequence[str], seed: int, n_draws: int):
    """Resampling counts per record, one vector per draw.

    Records are ordered by their id hash before drawing so that the counts a
    record receives do not depend on its position.
    """
    keys = [tuple(_id_key(i)) for i in ids]
    order = sorted(range(len(ids)), key=lambda j: (keys[j], ids[j]))
    n = len(ids)
    for d in range(n_draws):
        rng = np.random.default_rng(np.random.SeedSequence([seed, d]))
        counts = rng.multinomial(n, np.full(n, 1.0 / n))
        w = np.empty(n)
        w[order] = counts
        yield w


def trimmed_sd(draws: np.ndarray, outlier_drop: float) -> float | np.ndarray:
    """Standard deviation (ddof=1) after dropping ``outlier_drop / 2`` of the
    draws in each tail, column by column, ignoring NaN."""
    draws = np.asarray(draws, dtype=float)
    vec = draws.ndim == 2
    cols = draws if vec else draws[:, None]
    out = np.full(cols.shape[1], np.nan)
    for j in range(cols.shape[1]):
        v = np.sort(cols[:, j][np.isfinite(cols[:, j])])
        cut = int(np.floor(v.size * outlier_drop / 2.0))
        if cut:
            v = v[cut:v.size - cut]
        if v.size >= 2:
            out[j] = np.std(v, ddof=1)
    return out if vec else float(out[0])


def bayesian_bootstrap(data, pipeline: Callable[[np.ndarray], float | np.ndarray],
                       config: BootstrapConfig | None = None) -> BootstrapResult:
    """Standard error of ``pipeline`` under reweighting of records.

    Parameters
    ----------
    data
        A :class:`~beliefcal.datamodel.Dataset` or a sequence of record ids.
    pipeline
        Maps a weight vector to a statistic (scalar or 1-D array). It should
        rerun every estimation step under the weights. Library errors raised
        by a draw mark that draw as failed.
    config
        Number of draws, outlier trimming, seed and parallelism.

    Returns
    -------
    BootstrapResult
        ``se`` (array for vector statistics), the successful draws in draw
        order, and the number of failed draws.

    Raises
    ------
    TooManyFailures
        More than half of the draws failed.
    """
    cfg = config or BootstrapConfig()
    ids = _ids_of(data)
    if cfg.mode == "bayesian":
        weights = dirichlet_weights(ids, cfg.seed, cfg.n_draws, cfg.chunk)
    else:
        weights = multinomial_weights(ids, cfg.seed, cfg.n_draws)

    def run(w):
        try:
            return np.asarray(pipeline(w), dtype=float)
        except BeliefcalError:
            return None

    if cfg.parallel:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
            results = list(pool.map(run, weights))
    else:
        results = [run(w) for w in weights]

    ok = [r for r in results if r is not None]
    n_failed = len(results) - len(ok)
    if n_failed > 0.5 * cfg.n_draws:
        raise TooManyFailures(f"{n_failed} of {cfg.n_draws} bootstrap draws failed")
    draws = np.array(ok, dtype=float)
    return BootstrapResult(trimmed_sd(draws, cfg.outlier_drop), draws, n_failed)
