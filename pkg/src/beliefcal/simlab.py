"""Synthetic experiment populations with retained latent truth.

Beliefs follow normal-normal Bayesian updating. Before the experiment each
person may buy signals at a fixed cost; with quadratic loss the risk of acting
on a belief with variance ``v`` is ``tau**2 * v``, so people with large
``|tau|`` end up with precise priors and small learning rates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datamodel import BeliefRecord, Dataset, Design, validate_dataset
from .errors import (
    ConfigError,
    InvalidDistributionSpec,
    IterationCapExceeded,
    NonPositiveSignalVariance,
)

__all__ = [
    "Dist",
    "SignalSpec",
    "CovariateSpec",
    "SimConfig",
    "SimTruth",
    "Latents",
    "bayesian_update",
    "next_variance",
    "acquire_information",
    "acquire_information_many",
    "simulate_population",
    "MAX_SIGNALS",
    "costly_acquisition_config",
]

MAX_SIGNALS = 1_000_000


# -- distributions -----------------------------------------------------------

_FAMILIES = {"point": 1, "uniform": 2, "normal": 2, "lognormal": 2}
_DIST_RE = re.compile(r"^\s*([a-z]+)\s*\(([^)]*)\)\s*$")


@dataclass(frozen=True)
class Dist:
    """Scalar distribution: ``point(c)``, ``uniform(a, b)``, ``normal(mu, sd)``
    or ``lognormal(mu, sd)`` (parameters of the underlying normal)."""

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidDistributionSpec(f"unknown distribution family {self.family!r}")
        if len(self.params) != _FAMILIES[self.family]:
            raise InvalidDistributionSpec(
                f"{self.family} takes {_FAMILIES[self.family]} parameter(s), "
                f"got {len(self.params)}"
            )
        if not all(math.isfinite(p) for p in self.params):
            raise InvalidDistributionSpec("distribution parameters must be finite")
        if self.family == "uniform" and not self.params[0] <= self.params[1]:
            raise InvalidDistributionSpec("uniform(a, b) needs a <= b")
        if self.family in ("normal", "lognormal") and self.params[1] < 0:
            raise InvalidDistributionSpec(f"{self.family} sd must be nonnegative")

    @classmethod
    def point(cls, c: float) -> "Dist":
        return cls("point", (float(c),))

    @classmethod
    def uniform(cls, a: float, b: float) -> "Dist":
        return cls("uniform", (float(a), float(b)))

    @classmethod
    def normal(cls, mu: float, sd: float) -> "Dist":
        return cls("normal", (float(mu), float(sd)))

    @classmethod
    def parse(cls, spec: "Dist | str | float | dict") -> "Dist":
        if isinstance(spec, Dist):
            return spec
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return cls.point(spec)
        if isinstance(spec, dict):
            spec = dict(spec)
            family = spec.pop("family", None)
            try:
                return cls(str(family), tuple(float(v) for v in spec.values()))
            except (TypeError, ValueError) as exc:
                raise InvalidDistributionSpec(str(exc)) from None
        m = _DIST_RE.match(str(spec))
        if not m:
            raise InvalidDistributionSpec(f"cannot parse distribution {spec!r}")
        try:
            params = tuple(float(p) for p in m.group(2).split(",") if p.strip())
        except ValueError:
            raise InvalidDistributionSpec(f"bad parameters in {spec!r}") from None
        return cls(m.group(1), params)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.family == "point":
            return np.full(n, p[0])
        if self.family == "uniform":
            return rng.uniform(p[0], p[1], size=n)
        if self.family == "normal":
            return rng.normal(p[0], p[1], size=n)
        return rng.lognormal(p[0], p[1], size=n)

    def __str__(self) -> str:
        return f"{self.family}({', '.join(repr(x) for x in self.params)})"


@dataclass(frozen=True)
class SignalSpec:
    """Potential signals for arms A and B.

    Point masses give the common-signal regime; any other distribution draws
    person-specific signals.
    """

    high: Dist = field(default_factory=lambda: Dist.point(1.0))
    low: Dist = field(default_factory=lambda: Dist.point(0.0))


@dataclass(frozen=True)
class CovariateSpec:
    """Observed covariate ``intercept + slope * latent + N(0, noise_sd**2)``.

    ``source`` is one of ``alpha``, ``tau``, ``prior_var``, ``prior`` or
    ``noise`` (pure noise, ignores slope).
    """

    name: str
    source: str = "alpha"
    slope: float = 1.0
    intercept: float = 0.0
    noise_sd: float = 0.0


@dataclass(frozen=True)
class Latents:
    """Draws available to a ``tau_link`` callable."""

    alpha: np.ndarray
    prior: np.ndarray
    prior_var: np.ndarray
    signal_high: np.ndarray
    signal_low: np.ndarray


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    design: Design = Design.ACTIVE
    tau_dist: Dist = field(default_factory=lambda: Dist.point(1.0))
    u_dist: Dist = field(default_factory=lambda: Dist.point(0.0))
    prior_mean_dist: Dist = field(default_factory=lambda: Dist.normal(0.0, 1.0))
    sigma_x0: float = 1.0
    sigma_s: float = 1.0
    cost: float = 0.0
    signal_spec: SignalSpec = field(default_factory=SignalSpec)
    p_treat: float = 0.5
    gamma: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    # extensions beyond the structural core
    prior_var_dist: Dist | None = None
    tau_link: Callable[[Latents], np.ndarray] | None = None
    covariates: tuple[CovariateSpec, ...] = ()
    n_groups: int = 0
    group_effect_sd: float = 0.0
    record_prior_var: bool = True

    def __post_init__(self):
        object.__setattr__(self, "design", Design.parse(self.design))
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        if not self.sigma_s > 0:
            raise ConfigError("sigma_s must be positive")
        if self.sigma_x0 < 0:
            raise ConfigError("sigma_x0 must be nonnegative")
        if self.cost < 0:
            raise ConfigError("cost must be nonnegative")
        if not 0 < self.p_treat < 1:
            raise ConfigError("p_treat must lie strictly between 0 and 1")
        if len(self.gamma) != 2:
            raise ConfigError("gamma must be a pair (gamma_0, gamma_1)")
        if self.tau_link is not None and self.cost > 0:
            raise ConfigError(
                "tau_link makes tau a function of alpha, which conflicts with "
                "information acquisition (cost > 0) where alpha depends on tau"
            )
        if self.prior_var_dist is not None and self.cost > 0:
            raise ConfigError("prior_var_dist requires cost == 0")
        if self.n_groups < 0:
            raise ConfigError("n_groups must be nonnegative")
        for c in self.covariates:
            if c.source not in ("alpha", "tau", "prior_var", "prior", "noise"):
                raise ConfigError(f"unknown covariate source {c.source!r}")


@dataclass(frozen=True)
class SimTruth:
    """Per-individual latent truth, aligned with the dataset records."""

    ids: tuple[str, ...]
    tau: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    prior_var: np.ndarray
    n_signals: np.ndarray
    prior: np.ndarray
    signal_high: np.ndarray
    signal_low: np.ndarray
    x_a: np.ndarray
    x_b: np.ndarray
    y_a: np.ndarray
    y_b: np.ndarray
    treat: np.ndarray

    def subset(self, indices) -> "SimTruth":
        idx = np.asarray(indices, dtype=int)
        kw = {}
        for name, val in self.__dict__.items():
            if name == "ids":
                kw[name] = tuple(val[i] for i in idx)
            else:
                kw[name] = val[idx]
        return SimTruth(**kw)


# -- updating and acquisition ------------------------------------------------


def bayesian_update(prior_mean, prior_var, signal, signal_var):
    """Normal-normal update. Returns ``(posterior_mean, posterior_var, alpha)``
    where ``alpha = prior_var / (prior_var + signal_var)``.

    Works elementwise on arrays as well as on scalars.
    """
    if np.any(np.asarray(signal_var) <= 0):
        raise NonPositiveSignalVariance("signal variance must be positive")
    if np.any(np.asarray(prior_var) < 0):
        raise ValueError("prior variance must be nonnegative")
    alpha = prior_var / (prior_var + signal_var)
    post_mean = (1 - alpha) * prior_mean + alpha * signal
    post_var = prior_var * signal_var / (prior_var + signal_var)
    return post_mean, post_var, alpha


def next_variance(var, sigma_s):
    """Belief variance after one more signal of variance ``sigma_s``."""
    return var * sigma_s / (var + sigma_s)


def acquire_information(tau: float, sigma_x0: float, sigma_s: float, cost: float):
    """Buy signals while the drop in quadratic risk exceeds the cost.

    Returns ``(final_var, n_signals, alpha_final)``. On exit
    ``tau**2 * (final_var - next_variance(final_var)) <= cost``.
    """
    if not sigma_s > 0:
        raise NonPositiveSignalVariance("sigma_s must be positive")
    if not cost > 0:
        raise ValueError("cost must be positive")
    if sigma_x0 < 0:
        raise ValueError("sigma_x0 must be nonnegative")
    t2 = tau * tau
    var = float(sigma_x0)
    bought = 0
    while True:
        nxt = next_variance(var, sigma_s)
        if not t2 * (var - nxt) > cost:
            break
        if bought >= MAX_SIGNALS:
            raise IterationCapExceeded(
                f"still buying after {MAX_SIGNALS} signals (tau={tau}, cost={cost})"
            )
        var = nxt
        bought += 1
    return var, bought, var / (var + sigma_s)


def acquire_information_many(tau, sigma_x0, sigma_s: float, cost: float):
    """Vectorised :func:`acquire_information`; identical floating-point path."""
    if not sigma_s > 0:
        raise NonPositiveSignalVariance("sigma_s must be positive")
    if not cost > 0:
        raise ValueError("cost must be positive")
    tau = np.asarray(tau, dtype=float)
    t2 = tau * tau
    var = np.broadcast_to(np.asarray(sigma_x0, dtype=float), tau.shape).copy()
    if np.any(var < 0):
        raise ValueError("sigma_x0 must be nonnegative")
    bought = np.zeros(tau.shape, dtype=np.int64)
    active = np.ones(tau.shape, dtype=bool)
    while True:
        nxt = next_variance(var[active], sigma_s)
        buy = t2[active] * (var[active] - nxt) > cost
        if not buy.any():
            break
        idx = np.flatnonzero(active)
        if np.any(bought[idx[buy]] >= MAX_SIGNALS):
            raise IterationCapExceeded(f"still buying after {MAX_SIGNALS} signals")
        var[idx[buy]] = nxt[buy]
        bought[idx[buy]] += 1
        active[idx[~buy]] = False
    return var, bought, var / (var + sigma_s)


# -- population --------------------------------------------------------------

_STREAMS = (
    "tau",
    "u",
    "prior",
    "prior_var",
    "signal_high",
    "signal_low",
    "arm",
    "group",
    "group_effect",
    "covariates",
)


def _covariate(spec: CovariateSpec, latent: dict, rng, n) -> np.ndarray:
    if spec.source == "noise":
        base = np.zeros(n)
    else:
        base = spec.slope * latent[spec.source]
    out = spec.intercept + base
    if spec.noise_sd > 0:
        out = out + rng.normal(0.0, spec.noise_sd, size=n)
    return out


def _opt(v: float) -> float | None:
    return None if v is None or np.isnan(v) else float(v)


def simulate_population(config: SimConfig) -> tuple[Dataset, SimTruth]:
    """Draw a population, assign arms, and realise beliefs and outcomes.

    Every latent variable has its own random stream spawned from the root
    seed, so output is a deterministic function of the configuration.
    """
    cfg = config
    n = int(cfg.n)
    streams = dict(
        zip(_STREAMS, (np.random.default_rng(s) for s in
                       np.random.SeedSequence(cfg.seed).spawn(len(_STREAMS))))
    )

    prior = cfg.prior_mean_dist.sample(streams["prior"], n)
    s_high = cfg.signal_spec.high.sample(streams["signal_high"], n)
    s_low = cfg.signal_spec.low.sample(streams["signal_low"], n)
    u = cfg.u_dist.sample(streams["u"], n)

    if cfg.tau_link is None:
        tau = cfg.tau_dist.sample(streams["tau"], n)
    if cfg.cost > 0:
        prior_var, n_signals, alpha = acquire_information_many(
            tau, cfg.sigma_x0, cfg.sigma_s, cfg.cost
        )
    else:
        if cfg.prior_var_dist is not None:
            prior_var = cfg.prior_var_dist.sample(streams["prior_var"], n)
            if np.any(prior_var < 0):
                raise InvalidDistributionSpec("prior_var_dist produced negative variances")
        else:
            prior_var = np.full(n, float(cfg.sigma_x0))
        n_signals = np.zeros(n, dtype=np.int64)
        alpha = prior_var / (prior_var + cfg.sigma_s)
    if cfg.tau_link is not None:
        latents = Latents(alpha, prior, prior_var, s_high, s_low)
        tau = np.asarray(cfg.tau_link(latents), dtype=float)
        if tau.shape != (n,):
            raise ConfigError("tau_link must return one value per individual")

    if cfg.n_groups > 0:
        group_idx = streams["group"].integers(0, cfg.n_groups, size=n)
        effects = streams["group_effect"].normal(0.0, cfg.group_effect_sd, cfg.n_groups)
        u = u + effects[group_idx]
    else:
        group_idx = None

    if cfg.design is Design.PASSIVE:
        s_low = prior.copy()
    x_a = alpha * (s_high - prior) + prior
    x_b = alpha * (s_low - prior) + prior
    if cfg.design is not Design.ACTIVE:
        # no signal in arm B: potential belief is the prior itself
        x_b = prior.copy()
    y_a = tau * x_a + u
    y_b = tau * x_b + u

    treat = streams["arm"].random(n) < cfg.p_treat
    x = np.where(treat, x_a, x_b)
    y = np.where(treat, y_a, y_b)

    latent = {"alpha": alpha, "tau": tau, "prior_var": prior_var, "prior": prior}
    cov_rng = streams["covariates"]
    cov_cols = [(c.name, _covariate(c, latent, cov_rng, n)) for c in cfg.covariates]

    width = len(str(n - 1))
    ids = tuple(f"i{i:0{width}d}" for i in range(n))
    g0, g1 = (float(g) for g in cfg.gamma)
    records = []
    for i in range(n):
        arm = "A" if treat[i] else "B"
        rec = dict(
            id=ids[i],
            arm=arm,
            prior=float(prior[i]),
            posterior=float(x[i]),
            prior_var=float(prior_var[i]) if cfg.record_prior_var else None,
            signal_high=float(s_high[i]),
            covariates={name: float(col[i]) for name, col in cov_cols},
            group=None if group_idx is None else f"g{group_idx[i]}",
        )
        if cfg.design is Design.ACTIVE:
            rec["signal_low"] = float(s_low[i])
            rec["signal"] = float(s_high[i] if treat[i] else s_low[i])
            rec["outcome_post"] = float(y[i])
        elif cfg.design is Design.PASSIVE:
            rec["signal"] = float(s_high[i]) if treat[i] else None
            rec["outcome_post"] = float(y[i])
        else:
            rec["signal"] = float(s_high[i]) if treat[i] else None
            rec["outcome_pre"] = float(tau[i] * prior[i] + g0 + u[i])
            rec["outcome_post"] = float(tau[i] * x[i] + g1 + u[i])
        records.append(BeliefRecord(**rec))

    dataset = validate_dataset(records, cfg.design)
    truth = SimTruth(
        ids=ids,
        tau=tau,
        u=u,
        alpha=alpha,
        prior_var=prior_var,
        n_signals=n_signals,
        prior=prior,
        signal_high=s_high,
        signal_low=s_low,
        x_a=x_a,
        x_b=x_b,
        y_a=y_a,
        y_b=y_b,
        treat=treat.astype(int),
    )
    return dataset, truth


def costly_acquisition_config(n: int = 10_000, design: Design | str = Design.ACTIVE,
                              seed: int = 0, **overrides) -> SimConfig:
    """Endogenous-acquisition population behind the CLI preset
    ``costly-acquisition``: dispersed positive effects and costly signals."""
    base = dict(
        n=n,
        design=Design.parse(design),
        tau_dist=Dist.uniform(0.2, 3.0),
        u_dist=Dist.normal(0.0, 1.0),
        prior_mean_dist=Dist.normal(0.0, 1.0),
        sigma_x0=1.0,
        sigma_s=1.0,
        cost=0.05,
        signal_spec=SignalSpec(Dist.point(2.0), Dist.point(-1.0)),
        seed=seed,
    )
    base.update(overrides)
    return SimConfig(**base)
