"""CLI surface tests: exit codes, manifests, golden help, output discipline."""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from idmkit.cli import main
from idmkit.manifest import read_manifest

GOLDEN = Path(__file__).parent / "data" / "golden_help"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def sim_out(tmp_path_factory, fixtures_dir):
    out = tmp_path_factory.mktemp("sim")
    result = CliRunner().invoke(main, [
        "simulate", "--config", str(fixtures_dir / "sim_small.json"),
        "--out", str(out), "--seed", "7"])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def cohorts_out(tmp_path_factory, sim_out, fixtures_dir):
    out = tmp_path_factory.mktemp("cohorts")
    result = CliRunner().invoke(main, [
        "build-cohorts", "--exams", str(sim_out / "exams.csv"),
        "--rules", str(fixtures_dir / "rules_default.json"), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.mark.parametrize("name,args", [
    ("root", []),
    ("simulate", ["simulate"]),
    ("build-cohorts", ["build-cohorts"]),
    ("fit", ["fit"]),
    ("predict", ["predict"]),
    ("census", ["census"]),
    ("plot", ["plot"]),
])
def test_help_matches_golden_file(runner, name, args):
    result = runner.invoke(main, [*args, "--help"], env={"COLUMNS": "80"})
    assert result.exit_code == 0
    assert result.output == (GOLDEN / f"{name}.txt").read_text()


def test_simulate_writes_expected_files(sim_out):
    for name in ("exams.csv", "truth.csv", "sim_config.json", "run_manifest.json"):
        assert (sim_out / name).exists()
    manifest = read_manifest(sim_out)
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 7
    assert set(manifest["outputs"]) == {"exams.csv", "truth.csv", "sim_config.json"}


def test_simulate_missing_config_exit4(runner, tmp_path):
    result = runner.invoke(main, ["simulate", "--config", str(tmp_path / "nope.json"),
                                  "--out", str(tmp_path / "o"), "--seed", "1"])
    assert result.exit_code == 4
    assert "nope.json" in result.output


def test_simulate_malformed_json_exit2(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 10,\n "seed": oops}')
    result = runner.invoke(main, ["simulate", "--config", str(bad),
                                  "--out", str(tmp_path / "o"), "--seed", "1"])
    assert result.exit_code == 2
    assert "line 2" in result.output and "column" in result.output


def test_simulate_same_seed_identical_checksums(runner, fixtures_dir, tmp_path):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        result = runner.invoke(main, ["simulate", "--config",
                                      str(fixtures_dir / "sim_small.json"),
                                      "--out", str(out), "--seed", "99"])
        assert result.exit_code == 0
        outs.append(read_manifest(out)["outputs"])
    assert outs[0] == outs[1]


def test_build_cohorts_outputs(cohorts_out):
    assert (cohorts_out / "records.csv").exists()
    assert (cohorts_out / "flowchart.csv").exists()
    flow = pd.read_csv(cohorts_out / "flowchart.csv")
    n_in = int(flow.loc[flow.step == "subjects_in", "count"].iloc[0])
    rest = int(flow.loc[flow.step != "subjects_in", "count"].sum())
    assert n_in == rest  # conservation, as serialized


def test_fit_missing_records_exit4(runner, tmp_path):
    result = runner.invoke(main, ["fit", "--records", str(tmp_path / "none.csv"),
                                  "--out", str(tmp_path / "o")])
    assert result.exit_code == 4
    assert "build-cohorts" in result.output  # remediation hint


def test_fit_nonconvergence_exit5_with_diagnostics(runner, cohorts_out, tmp_path, monkeypatch):
    from idmkit import cli as cli_module
    from idmkit.exceptions import NonConvergenceError

    def failing_fit(records, config):
        raise NonConvergenceError("forced failure", last_params=np.zeros(3),
                                  gradient_norm=1.0, iterations=500)

    monkeypatch.setattr(cli_module, "fit", failing_fit)
    out = tmp_path / "fit"
    result = runner.invoke(main, ["fit", "--records", str(cohorts_out / "records.csv"),
                                  "--out", str(out), "--form", "weibull"])
    assert result.exit_code == 5
    assert (out / "diagnostics_all.json").exists()
    assert "diagnostics" in result.output


def test_full_cycle_with_weibull_fit(runner, cohorts_out, tmp_path):
    fit_out = tmp_path / "fit"
    result = runner.invoke(main, ["fit", "--records", str(cohorts_out / "records.csv"),
                                  "--out", str(fit_out), "--form", "weibull",
                                  "--covariates", "risk_score"])
    assert result.exit_code == 0, result.output
    assert (fit_out / "model.json").exists()
    assert (fit_out / "hazard_ratios.csv").exists()
    payload = json.loads((fit_out / "model.json").read_text())
    assert payload["covariance"] is not None
    assert payload["convergence"]["gradient_norm"] <= 1e-4

    pred_out = tmp_path / "pred"
    result = runner.invoke(main, ["predict", "--model", str(fit_out / "model.json"),
                                  "--out", str(pred_out), "--ages", "60:96:2",
                                  "--draws", "300", "--seed", "5"])
    assert result.exit_code == 0, result.output
    risk = pd.read_csv(pred_out / "risk.csv")
    assert list(risk.columns) == ["age", "estimate", "lo95", "hi95", "quantity", "profile"]
    assert (risk.lo95 <= risk.estimate + 1e-12).all()
    cond = pd.read_csv(pred_out / "conditional.csv")
    assert list(cond.columns) == ["profile", "age", "10y", "20y", "ever"]
    assert cond.loc[cond.age == 80.0, "20y"].isna().all()

    plot_out = tmp_path / "plots"
    result = runner.invoke(main, ["plot", "--curves", str(pred_out),
                                  "--out", str(plot_out)])
    assert result.exit_code == 0, result.output
    svg = (plot_out / "risk.svg").read_bytes()
    assert svg.startswith(b"<?xml")


def test_out_dir_collision_exit3(runner, fixtures_dir, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    result = runner.invoke(main, ["simulate", "--config",
                                  str(fixtures_dir / "sim_small.json"),
                                  "--out", str(blocker / "out"), "--seed", "1"])
    assert result.exit_code == 3


def test_predict_missing_model_exit4(runner, tmp_path):
    result = runner.invoke(main, ["predict", "--model", str(tmp_path / "m.json"),
                                  "--out", str(tmp_path / "o")])
    assert result.exit_code == 4


def test_plot_without_curves_exit4(runner, tmp_path):
    (tmp_path / "empty").mkdir()
    result = runner.invoke(main, ["plot", "--curves", str(tmp_path / "empty"),
                                  "--out", str(tmp_path / "o")])
    assert result.exit_code == 4


def test_stratified_fit_predict_plot(runner, fixtures_dir, tmp_path):
    """Two birth cohorts fitted separately, curves overlaid per stratum."""
    import json as _json

    base = _json.loads((fixtures_dir / "sim_small.json").read_text())
    frames = []
    for seed, birth_year in ((11, 1920), (12, 1930)):
        cfg_path = tmp_path / f"cfg{birth_year}.json"
        payload = {**base, "n": 150, "seed": seed, "birth_year": birth_year}
        cfg_path.write_text(_json.dumps(payload))
        out = tmp_path / f"sim{birth_year}"
        result = runner.invoke(main, ["simulate", "--config", str(cfg_path),
                                      "--out", str(out), "--seed", str(seed)])
        assert result.exit_code == 0
        frame = pd.read_csv(out / "exams.csv", dtype=str, keep_default_na=False)
        frame["subject_id"] = f"c{birth_year}_" + frame["subject_id"]
        frames.append(frame)
    merged = tmp_path / "exams.csv"
    pd.concat(frames, ignore_index=True).to_csv(merged, index=False)

    cohorts = tmp_path / "cohorts"
    result = runner.invoke(main, ["build-cohorts", "--exams", str(merged),
                                  "--out", str(cohorts)])
    assert result.exit_code == 0
    labels = set(pd.read_csv(cohorts / "records.csv").cohort)
    assert labels == {"1915-1924", "1925-1934"}

    fit_out = tmp_path / "fit"
    result = runner.invoke(main, ["fit", "--records", str(cohorts / "records.csv"),
                                  "--out", str(fit_out), "--form", "weibull",
                                  "--covariates", "risk_score",
                                  "--stratify-by", "cohort"])
    assert result.exit_code == 0, result.output
    assert (fit_out / "model_1915-1924.json").exists()
    assert (fit_out / "model_1925-1934.json").exists()
    hr = pd.read_csv(fit_out / "hazard_ratios.csv")
    assert set(hr.stratum) == {"1915-1924", "1925-1934"}

    pred = tmp_path / "pred"
    result = runner.invoke(main, ["predict", "--model", str(fit_out),
                                  "--out", str(pred), "--ages", "60:90:5",
                                  "--draws", "250", "--seed", "2",
                                  "--profile", "risk_score=0",
                                  "--profile", "risk_score=1"])
    assert result.exit_code == 0, result.output
    risk = pd.read_csv(pred / "risk.csv")
    assert risk.profile.nunique() == 4  # 2 strata x 2 profiles

    plots = tmp_path / "plots"
    result = runner.invoke(main, ["plot", "--curves", str(pred), "--out", str(plots)])
    assert result.exit_code == 0
    assert (plots / "risk.svg").exists() and (plots / "prevalence.svg").exists()


def test_version_flag(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0 and "idmkit" in result.output


def test_census_command(runner, cohorts_out, tmp_path):
    out = tmp_path / "census"
    result = runner.invoke(main, ["census", "--records",
                                  str(cohorts_out / "records.csv"), "--out", str(out)])
    assert result.exit_code == 0, result.output
    census = pd.read_csv(out / "census.csv")
    assert "category" in census.columns
    assert (census.category == "death_after_dementia_diagnosis").any()


def test_commands_write_only_inside_out_dir(runner, fixtures_dir, tmp_path, monkeypatch):
    workdir = tmp_path / "cwd"
    workdir.mkdir()
    monkeypatch.chdir(workdir)
    out = tmp_path / "only_here"
    result = runner.invoke(main, ["simulate", "--config",
                                  str(fixtures_dir / "sim_small.json"),
                                  "--out", str(out), "--seed", "3"])
    assert result.exit_code == 0
    assert list(workdir.iterdir()) == []


def test_manifest_idempotence(runner, fixtures_dir, tmp_path):
    hashes = []
    for sub in ("r1", "r2"):
        out = tmp_path / sub
        runner.invoke(main, ["simulate", "--config", str(fixtures_dir / "sim_small.json"),
                             "--out", str(out), "--seed", "4"])
        manifest = read_manifest(out)
        hashes.append((manifest["inputs"], manifest["outputs"]))
    assert hashes[0] == hashes[1]
