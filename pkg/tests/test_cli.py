import csv
import io
import json
import subprocess
import sys

import pytest

from beliefcal.cli import main
from beliefcal.config import build_run_config, resolve_seed
from beliefcal.errors import ConfigError
from beliefcal.io import BASE_COLUMNS, TRUTH_COLUMNS, read_dataset_csv


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def simulate(tmp_path, *extra, name="data.csv"):
    path = tmp_path / name
    code, out, _ = run("simulate", "--output", str(path), *extra)
    assert code == 0
    return path, json.loads(out)


def test_simulate_writes_both_files(tmp_path):
    path, summary = simulate(tmp_path, "--n", "100", "--design", "active", "--seed", "1")
    truth = tmp_path / "data_truth.csv"
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == BASE_COLUMNS
    assert len(rows) == 101
    with truth.open() as fh:
        trows = list(csv.reader(fh))
    assert tuple(trows[0]) == TRUTH_COLUMNS and len(trows) == 101
    assert summary["n"] == 100
    assert set(summary) >= {"treated_share", "corr_alpha_tau"}


def test_simulate_is_byte_identical(tmp_path):
    a, _ = simulate(tmp_path, "--n", "50", "--seed", "4", name="a.csv")
    b, _ = simulate(tmp_path, "--n", "50", "--seed", "4", name="b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[sim]\np_treat = 1.5\n")
    code, _, err = run("simulate", "--config", str(cfg), "--output", str(tmp_path / "x.csv"))
    assert code == 2
    assert json.loads(err)["exit_code"] == 2


def test_round_trip_and_full_precision(tmp_path):
    path, _ = simulate(tmp_path, "--n", "200", "--design", "passive", "--preset",
                       "costly-acquisition")
    ds = read_dataset_csv(path, "passive")
    assert ds.n == 200
    text = path.read_text().splitlines()[1].split(",")
    prior = float(text[BASE_COLUMNS.index("prior")])
    assert prior == ds.prior[0]


def test_estimate_homogeneous(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('design = "active"\n[sim]\ntau_dist = "point(1.25)"\n'
                   'u_dist = "normal(0, 0.3)"\nprior_var_dist = "uniform(0.2, 3)"\n'
                   'signal_high = 2.0\nsignal_low = -1.0\n')
    path, _ = simulate(tmp_path, "--config", str(cfg), "--n", "2000")
    code, out, _ = run("estimate", "--input", str(path), "--design", "active",
                       "--estimators", "wald,reduced_form,lls_ape", "--bandwidth", "0.2")
    assert code == 0
    recs = {r["estimator"]: r for r in json.loads(out)}
    assert recs["wald"]["point"] == pytest.approx(1.25, abs=0.1)
    assert recs["lls_ape"]["point"] == pytest.approx(1.25, abs=0.15)
    for r in recs.values():
        assert set(r) >= {"estimator", "point", "se", "bandwidth", "n_total", "n_used",
                          "skipped_points", "seed"}


def test_estimate_with_bootstrap_and_csv(tmp_path):
    path, _ = simulate(tmp_path, "--n", "400", "--design", "passive", "--preset",
                       "costly-acquisition", "--seed", "2")
    code, out, _ = run("estimate", "--input", str(path), "--design", "passive",
                       "--estimators", "tsls_exposure,lls_ape", "--bootstrap", "20",
                       "--bandwidth", "0.2", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["estimator"] for r in rows] == ["tsls_exposure", "lls_ape"]
    assert all(float(r["se"]) > 0 for r in rows)


def test_attenuation_through_cli(tmp_path):
    path, _ = simulate(tmp_path, "--n", "10000", "--design", "passive", "--preset",
                       "costly-acquisition", "--seed", "3")
    code, out, _ = run("estimate", "--input", str(path), "--design", "passive",
                       "--estimators", "tsls_exposure,lls_ape")
    recs = {r["estimator"]: r["point"] for r in json.loads(out)}
    assert code == 0
    assert recs["lls_ape"] > recs["tsls_exposure"]


def test_incompatible_estimator(tmp_path):
    path, _ = simulate(tmp_path, "--n", "50")
    code, _, err = run("estimate", "--input", str(path), "--design", "active",
                       "--estimators", "panel_fd")
    assert code == 2
    assert "panel_fd" in json.loads(err)["message"]


def test_schema_error_names_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,prior,posterior,outcome_post,colour\n1,0,1,2,red\n")
    code, _, err = run("estimate", "--input", str(path), "--design", "panel")
    assert code == 3
    assert "colour" in json.loads(err)["message"]


def test_schema_error_names_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,prior,posterior,outcome_pre,outcome_post\na,0,1,0,2\nb,0,x,0,1\n")
    code, _, err = run("estimate", "--input", str(path), "--design", "panel")
    assert code == 3
    msg = json.loads(err)["message"]
    assert "row 3" in msg and "posterior" in msg


def test_estimation_failure_does_not_abort_others(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("id,prior,posterior,outcome_pre,outcome_post\n"
                    "a,0,1,0,2\nb,0,1,0,2\nc,0,1,0,3\n")
    code, out, _ = run("estimate", "--input", str(path), "--design", "panel",
                       "--estimators", "panel_fd,lls_ape")
    assert code == 4
    recs = json.loads(out)
    assert [r["estimator"] for r in recs] == ["panel_fd", "lls_ape"]
    assert all(r["error"] for r in recs)


def test_cape_csv_and_single_bin(tmp_path):
    path, _ = simulate(tmp_path, "--n", "1500", "--design", "active", "--preset",
                       "costly-acquisition")
    cfg = tmp_path / "c.toml"
    cfg.write_text("[lls]\ncape_bins = 4\nbandwidth = 0.1\n")
    code, out, _ = run("cape", "--input", str(path), "--design", "active", "--config",
                       str(cfg), "--format", "csv", "--bootstrap", "10")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["bin_center", "estimate", "se", "ci_lo", "ci_hi", "n_local"]
    assert len(rows) == 5 and rows[-1]["bin_center"] == "ape"
    for r in rows:
        e, s = float(r["estimate"]), float(r["se"])
        assert float(r["ci_lo"]) == pytest.approx(e - 2 * s)
        assert float(r["ci_hi"]) == pytest.approx(e + 2 * s)

    cfg.write_text("[lls]\ncape_bins = 1\nbandwidth = 0.1\n")
    _, out, _ = run("cape", "--input", str(path), "--design", "active", "--config", str(cfg))
    rows = json.loads(out)
    assert len(rows) == 2
    assert rows[0]["estimate"] == pytest.approx(rows[1]["estimate"], rel=1e-12)


def test_weights_command(tmp_path):
    path, _ = simulate(tmp_path, "--n", "300", "--design", "panel", "--preset",
                       "costly-acquisition")
    code, out, _ = run("weights", "--input", str(path), "--design", "panel")
    assert code == 0
    payload = json.loads(out)
    assert payload["source"] == "updates"
    assert sum(payload["normalized"]) == pytest.approx(1.0, abs=1e-12)


def test_seed_resolution(monkeypatch):
    monkeypatch.setenv("BELIEFCAL_SEED", "17")
    assert resolve_seed(None, None) == 17
    assert resolve_seed(None, 5) == 5
    assert resolve_seed(3, 5) == 3
    monkeypatch.delenv("BELIEFCAL_SEED")
    assert resolve_seed(None, None) == 0


def test_flags_override_file():
    cfg = build_run_config({"design": "panel", "lls": {"bandwidth": 0.3}}, bandwidth=0.1,
                           design="active")
    assert cfg.lls.bandwidth == 0.1
    assert cfg.design.value == "active"
    with pytest.raises(ConfigError):
        build_run_config({"lls": {"bandwith": 0.3}})


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "beliefcal", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout
