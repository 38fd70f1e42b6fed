"""Run configuration from TOML files and command-line overrides.

Files use plain TOML, so both ``[lls]`` tables and dotted keys such as
``lls.bandwidth = 0.05`` work. Command-line flags override file values.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .datamodel import Design
from .errors import ConfigError, ValidationError
from .inference import BootstrapConfig
from .lls import LlsConfig
from .simlab import CovariateSpec, Dist, SignalSpec, SimConfig, costly_acquisition_config

__all__ = [
    "ESTIMATORS",
    "DESIGN_ESTIMATORS",
    "DEFAULT_ESTIMATORS",
    "RunConfig",
    "load_config_file",
    "build_run_config",
    "resolve_seed",
]

ESTIMATORS = (
    "panel_fd",
    "wald",
    "tsls_exposure",
    "tsls_split",
    "reduced_form",
    "lls_ape",
    "lls_cape",
    "weights",
)
DESIGN_ESTIMATORS = {
    Design.PANEL: {"panel_fd", "lls_ape", "lls_cape", "weights"},
    Design.ACTIVE: {"wald", "reduced_form", "lls_ape", "lls_cape", "weights"},
    Design.PASSIVE: {
        "wald",
        "tsls_exposure",
        "tsls_split",
        "reduced_form",
        "lls_ape",
        "lls_cape",
        "weights",
    },
}
DEFAULT_ESTIMATORS = {
    Design.PANEL: ("panel_fd", "lls_ape"),
    Design.ACTIVE: ("wald", "reduced_form", "lls_ape"),
    Design.PASSIVE: ("tsls_exposure", "tsls_split", "reduced_form", "lls_ape"),
}
TOP_KEYS = {"design", "estimators", "input", "output", "format", "seed", "sim", "lls", "bootstrap"}


@dataclass(frozen=True)
class RunConfig:
    design: Design | None = None
    estimators: tuple[str, ...] = ()
    lls: LlsConfig = field(default_factory=LlsConfig)
    bootstrap: BootstrapConfig | None = None
    sim: SimConfig | None = None
    input: Path | None = None
    output: Path | None = None
    format: str = "json"
    seed: int = 0

    def __post_init__(self):
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ConfigError(f"unknown estimator {unknown[0]!r}; choose from {', '.join(ESTIMATORS)}")
        if self.design is not None:
            bad = [e for e in self.estimators if e not in DESIGN_ESTIMATORS[self.design]]
            if bad:
                raise ConfigError(
                    f"estimator {bad[0]!r} is not available for {self.design.value} designs"
                )


def load_config_file(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from None
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    return data


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a table")
    return dict(sec)


def _build(cls, values: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"unknown key {section}.{sorted(unknown)[0]}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"bad value in [{section}]: {exc}") from None


def resolve_seed(flag: int | None, file_value: Any = None) -> int:
    """Flag, then config file, then ``BELIEFCAL_SEED``, then zero."""
    for v in (flag, file_value, os.environ.get("BELIEFCAL_SEED")):
        if v is None or v == "":
            continue
        try:
            return int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {v!r}") from None
    return 0


_SIM_DISTS = ("tau_dist", "u_dist", "prior_mean_dist", "prior_var_dist")


def build_sim_config(values: dict, design: Design | None, seed: int,
                     preset: str | None = None) -> SimConfig:
    values = dict(values)
    if design is not None:
        values["design"] = design
    values["seed"] = seed
    preset = values.pop("preset", preset)
    try:
        for key in _SIM_DISTS:
            if key in values and values[key] is not None:
                values[key] = Dist.parse(values[key])
        high = values.pop("signal_high", None)
        low = values.pop("signal_low", None)
        if high is not None or low is not None:
            base = SignalSpec()
            values["signal_spec"] = SignalSpec(
                Dist.parse(high) if high is not None else base.high,
                Dist.parse(low) if low is not None else base.low,
            )
        if "covariates" in values:
            values["covariates"] = tuple(CovariateSpec(**c) for c in values["covariates"])
        if "gamma" in values:
            values["gamma"] = tuple(float(g) for g in values["gamma"])
        if "design" in values:
            values["design"] = Design.parse(values["design"])
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"bad [sim] value: {exc}") from None
    allowed = {f.name for f in fields(SimConfig)} - {"tau_link"}
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"unknown key sim.{sorted(unknown)[0]}")
    if preset in (None, "default"):
        return SimConfig(**values)
    if preset == "costly-acquisition":
        return costly_acquisition_config(**values)
    raise ConfigError(f"unknown preset {preset!r}")


def build_run_config(data: dict, *, design=None, estimators=None, bandwidth=None,
                     bootstrap=None, seed=None, input=None, output=None, fmt=None,
                     n=None, preset=None, need_sim: bool = False) -> RunConfig:
    """Merge file values with flag overrides (flags win)."""
    design = design or data.get("design")
    try:
        design = Design.parse(design) if design is not None else None
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    flag_seed = seed
    seed = resolve_seed(seed, data.get("seed"))

    ests = estimators if estimators is not None else data.get("estimators")
    if isinstance(ests, str):
        ests = [e.strip() for e in ests.split(",") if e.strip()]
    if not ests and design is not None:
        ests = DEFAULT_ESTIMATORS[design]

    lls_vals = _section(data, "lls")
    if bandwidth is not None:
        lls_vals["bandwidth"] = bandwidth
    lls = _build(LlsConfig, lls_vals, "lls")

    boot_vals = _section(data, "bootstrap")
    if bootstrap is not None:
        boot_vals["n_draws"] = bootstrap
    if flag_seed is not None or "seed" not in boot_vals:
        boot_vals["seed"] = seed
    boot = None
    if boot_vals.get("n_draws", 0):
        boot = _build(BootstrapConfig, boot_vals, "bootstrap")

    sim = None
    if need_sim:
        sim_vals = _section(data, "sim")
        if n is not None:
            sim_vals["n"] = n
        sim = build_sim_config(sim_vals, design, seed, preset)
        design = design or sim.design

    return RunConfig(
        design=design,
        estimators=tuple(ests or ()),
        lls=lls,
        bootstrap=boot,
        sim=sim,
        input=Path(input or data["input"]) if (input or data.get("input")) else None,
        output=Path(output or data["output"]) if (output or data.get("output")) else None,
        format=fmt or data.get("format", "json"),
        seed=seed,
    )
