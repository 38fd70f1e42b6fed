"""Command-line interface: ``beliefcal {simulate,estimate,cape,weights}``.

Exit codes: 0 success, 2 configuration error, 3 schema error, 4 estimation
failure. Errors are also reported on stderr as a one-line JSON object.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import RunConfig, build_run_config, load_config_file
from .datamodel import Dataset, Design, EstimateResult
from .errors import BeliefcalError, ConfigError, ValidationError
from .estimators import (
    implied_weights,
    panel_fd,
    reduced_form,
    tsls_passive_exposure,
    tsls_split,
    wald_active,
)
from .inference import bayesian_bootstrap
from .io import read_dataset_csv, to_text, write_dataset_csv, write_table, write_truth_csv
from .lls import cape_vector, estimate_ape, estimate_cape
from .lls.local import conditioning_alpha
from .simlab import simulate_population

EXIT_OK, EXIT_CONFIG, EXIT_SCHEMA, EXIT_ESTIMATION = 0, 2, 3, 4

RESULT_FIELDS = (
    "estimator",
    "point",
    "se",
    "bandwidth",
    "n_total",
    "n_used",
    "skipped_points",
    "seed",
    "error",
)
CAPE_FIELDS = ("bin_center", "estimate", "se", "ci_lo", "ci_hi", "n_local")


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _classify(exc: BaseException) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, ConfigError):
        return CliError(EXIT_CONFIG, type(exc).__name__, str(exc))
    if isinstance(exc, ValidationError):
        return CliError(EXIT_SCHEMA, type(exc).__name__, str(exc))
    if isinstance(exc, BeliefcalError):
        return CliError(EXIT_ESTIMATION, type(exc).__name__, str(exc))
    if isinstance(exc, OSError):
        return CliError(EXIT_CONFIG, type(exc).__name__, str(exc))
    raise exc


# -- argument parsing ----------------------------------------------------------


def _common(p: argparse.ArgumentParser, data_input: bool = True):
    p.add_argument("--config", type=Path, help="TOML config file")
    if data_input:
        p.add_argument("--input", type=Path, help="dataset CSV")
    p.add_argument("--output", type=Path, help="output path (default: stdout)")
    p.add_argument("--design", choices=[d.value for d in Design])
    p.add_argument("--seed", type=int, help="root seed (fallback: BELIEFCAL_SEED)")
    p.add_argument("--format", dest="fmt", choices=["json", "csv"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beliefcal",
        description="Estimate effects of beliefs from information experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic experiment and its latent truth")
    _common(p, data_input=False)
    p.add_argument("--n", type=int, help="number of participants")
    p.add_argument("--preset", choices=["default", "costly-acquisition"])

    for name, text in (
        ("estimate", "run standard and local estimators"),
        ("cape", "conditional effects by rank bin"),
        ("weights", "implied weights of the standard estimator"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--estimators", help="comma-separated estimator list")
        p.add_argument("--bandwidth", type=float, help="kernel bandwidth (share of data)")
        p.add_argument("--bootstrap", type=int, help="bootstrap draws (0 disables)")
    return parser


def _run_config(args, need_sim=False) -> RunConfig:
    data = load_config_file(args.config)
    return build_run_config(
        data,
        design=args.design,
        estimators=getattr(args, "estimators", None),
        bandwidth=getattr(args, "bandwidth", None),
        bootstrap=getattr(args, "bootstrap", None),
        seed=args.seed,
        input=getattr(args, "input", None),
        output=args.output,
        fmt=args.fmt,
        n=getattr(args, "n", None),
        preset=getattr(args, "preset", None),
        need_sim=need_sim,
    )


# -- output helpers ------------------------------------------------------------


def _json_default(v):
    if isinstance(v, (np.floating, float)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _clean(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def _emit(text: str, output: Path | None, out=None):
    if output is None:
        (out or sys.stdout).write(text)
    else:
        output.write_text(text, encoding="utf-8")


def _records_text(records: list[dict], fmt: str) -> str:
    if fmt == "json":
        clean = [{k: _clean(v) for k, v in r.items()} for r in records]
        return json.dumps(clean, indent=2, default=_json_default) + "\n"
    rows = []
    for r in records:
        err = r.get("error")
        row = [r.get(f) for f in RESULT_FIELDS[:-1]]
        row.append("" if err is None else f"{err['type']}: {err['message']}")
        rows.append(row)
    return to_text(RESULT_FIELDS, rows)


# -- commands --------------------------------------------------------------------


def cmd_simulate(args, out=None) -> int:
    cfg = _run_config(args, need_sim=True)
    ds, truth = simulate_population(cfg.sim)
    data_path = cfg.output or Path("data.csv")
    truth_path = data_path.with_name(f"{data_path.stem}_truth{data_path.suffix or '.csv'}")
    write_dataset_csv(ds, data_path)
    write_truth_csv(truth, truth_path)
    corr = float("nan")
    if np.std(truth.alpha) > 0 and np.std(truth.tau) > 0:
        corr = float(np.corrcoef(truth.alpha, truth.tau)[0, 1])
    summary = {
        "n": ds.n,
        "design": ds.design.value,
        "treated_share": float(ds.treat.mean()),
        "corr_alpha_tau": corr,
        "mean_tau": float(truth.tau.mean()),
        "data": str(data_path),
        "truth": str(truth_path),
        "seed": cfg.sim.seed,
    }
    (out or sys.stdout).write(json.dumps({k: _clean(v) for k, v in summary.items()}) + "\n")
    return EXIT_OK


def _load(cfg: RunConfig) -> Dataset:
    if cfg.input is None:
        raise ConfigError("--input is required")
    if cfg.design is None:
        raise ConfigError("--design is required")
    if not cfg.input.exists():
        raise ConfigError(f"input file {cfg.input} does not exist")
    return read_dataset_csv(cfg.input, cfg.design)


def _pipelines(ds: Dataset, cfg: RunConfig) -> list[tuple[str, Callable]]:
    lls = cfg.lls
    table = {
        "panel_fd": [("panel_fd", lambda w: panel_fd(ds, w))],
        "wald": [("wald", lambda w: wald_active(ds, w))],
        "tsls_exposure": [("tsls_exposure", lambda w: tsls_passive_exposure(ds, w))],
        "tsls_split": [
            ("tsls_split_above", lambda w: tsls_split(ds, "above", True, w)),
            ("tsls_split_below", lambda w: tsls_split(ds, "below", True, w)),
        ],
        "reduced_form": [("reduced_form", lambda w: reduced_form(ds, w))],
        "lls_ape": [("lls_ape", lambda w: estimate_ape(ds, lls, w))],
    }
    out = []
    for name in cfg.estimators:
        out.extend(table.get(name, []))
    return out


def _with_bootstrap(ds, cfg, fn) -> EstimateResult:
    res = fn(None)
    if cfg.bootstrap is None:
        return res
    boot = bayesian_bootstrap(ds, lambda w: fn(w).point, cfg.bootstrap)
    return res.with_se(boot.se, cfg.bootstrap.seed)


def _error_record(name: str, exc: BaseException) -> dict:
    return {
        "estimator": name,
        "point": None,
        "error": {"type": type(exc).__name__, "message": str(exc)},
    }


def cmd_estimate(args, out=None) -> int:
    cfg = _run_config(args)
    ds = _load(cfg)
    records: list[dict] = []
    failed = False
    for name, fn in _pipelines(ds, cfg):
        try:
            res = _with_bootstrap(ds, cfg, fn)
            rec = res.as_dict()
            rec["error"] = None
            records.append(rec)
        except BeliefcalError as exc:
            failed = True
            records.append(_error_record(name, exc))
    if "lls_cape" in cfg.estimators:
        try:
            curve, _ = _cape_curve(ds, cfg)
            for g, e, s, n in curve.rows():
                records.append({
                    "estimator": f"lls_cape[{g!r}]",
                    "point": e,
                    "se": s,
                    "bandwidth": curve.bandwidth,
                    "n_total": ds.n,
                    "n_used": n,
                    "skipped_points": curve.skipped_points,
                    "seed": cfg.bootstrap.seed if cfg.bootstrap else None,
                    "error": None,
                })
        except BeliefcalError as exc:
            failed = True
            records.append(_error_record("lls_cape", exc))
    if "weights" in cfg.estimators:
        target = _weights_path(cfg)
        try:
            _write_weights(ds, cfg, target)
        except BeliefcalError as exc:
            failed = True
            records.append(_error_record("weights", exc))
    _emit(_records_text(records, cfg.format), cfg.output, out)
    return EXIT_ESTIMATION if failed else EXIT_OK


def _cape_curve(ds, cfg):
    curve = estimate_cape(ds, cfg.lls)
    if cfg.bootstrap is None:
        return curve, float("nan")
    boot = bayesian_bootstrap(ds, lambda w: cape_vector(ds, cfg.lls, w), cfg.bootstrap)
    bins = np.rint(curve.grid * cfg.lls.cape_bins - 0.5).astype(int)
    curve = curve.with_se(np.asarray(boot.se)[bins])
    return curve, float(np.asarray(boot.se)[-1])


def cmd_cape(args, out=None) -> int:
    cfg = _run_config(args)
    ds = _load(cfg)
    curve, ape_se = _cape_curve(ds, cfg)
    rows = []
    for g, e, s, n in curve.rows():
        rows.append({"bin_center": g, "estimate": e, "se": s,
                     "ci_lo": e - 2 * s, "ci_hi": e + 2 * s, "n_local": n})
    rows.append({"bin_center": "ape", "estimate": curve.ape, "se": ape_se,
                 "ci_lo": curve.ape - 2 * ape_se, "ci_hi": curve.ape + 2 * ape_se,
                 "n_local": int(curve.n_local.sum())})
    if cfg.format == "json":
        text = json.dumps([{k: _clean(v) for k, v in r.items()} for r in rows],
                          indent=2, default=_json_default) + "\n"
    else:
        text = to_text(CAPE_FIELDS, ([r[f] for f in CAPE_FIELDS] for r in rows))
    _emit(text, cfg.output, out)
    return EXIT_OK


def _weights_path(cfg: RunConfig) -> Path:
    if cfg.output is None:
        return Path("weights.csv")
    return cfg.output.with_name(f"{cfg.output.stem}_weights.csv")


def _weight_table(ds: Dataset, cfg: RunConfig):
    if ds.design is Design.PANEL:
        return implied_weights(ds)
    source = cfg.lls.source_for(ds.design)
    if source in ("raw", "smoothed", "predicted"):
        alpha, _ = conditioning_alpha(ds, cfg.lls)
        return implied_weights(ds, alpha)
    return implied_weights(ds)


def _write_weights(ds, cfg, target, out=None):
    table = _weight_table(ds, cfg)
    header = ("id", "unnormalized", "normalized", "source")
    rows = [(i, u, w, table.source) for i, u, w in zip(table.ids, table.unnormalized, table.normalized)]
    if target is None:
        (out or sys.stdout).write(to_text(header, rows))
    else:
        write_table(target, header, rows)


def cmd_weights(args, out=None) -> int:
    cfg = _run_config(args)
    ds = _load(cfg)
    if cfg.format == "json":
        table = _weight_table(ds, cfg)
        payload = {
            "design": ds.design.value,
            "source": table.source,
            "ids": list(table.ids),
            "unnormalized": table.unnormalized.tolist(),
            "normalized": table.normalized.tolist(),
            "share_negative": float((table.normalized < 0).mean()),
        }
        _emit(json.dumps(payload, default=_json_default) + "\n", cfg.output, out)
    else:
        _write_weights(ds, cfg, cfg.output, out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "cape": cmd_cape,
    "weights": cmd_weights,
}


def main(argv=None, out=None, err=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        cli_err = _classify(exc)
        payload = {"error": cli_err.kind, "message": str(cli_err), "exit_code": cli_err.code}
        (err or sys.stderr).write(json.dumps(payload) + "\n")
        return cli_err.code


if __name__ == "__main__":
    sys.exit(main())
