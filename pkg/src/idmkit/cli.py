"""Command-line surface: simulate, build-cohorts, fit, predict, census, plot.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 missing
upstream artifact, 5 non-convergence. Every command writes only inside
its output directory and leaves exactly one run manifest there.
"""

from __future__ import annotations

import functools
import glob
import json
import os
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import __version__
from .estimation import FitConfig, FittedModel, PenaltyWeights, fit, hazard_ratios, select_smoothing
from .exceptions import (
    ConfigError,
    IdmError,
    MissingUpstreamError,
    NonConvergenceError,
)
from .manifest import write_manifest
from .pipeline import RulesConfig, build_records, records_from_frame, records_to_frame, status_census
from .plots import plot_curve_frame
from .probabilities import conditional_table, confidence_bands
from .simulate import SimulationConfig, simulate_cohort

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_MISSING_UPSTREAM = 4
EXIT_NO_CONVERGENCE = 5


def _guarded(func):
    """Map exception classes onto the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except MissingUpstreamError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(EXIT_MISSING_UPSTREAM)
        except ConfigError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(EXIT_CONFIG)
        except NonConvergenceError as err:
            click.echo(f"error: {err}", err=True)
            diag = getattr(err, "diagnostics_path", None)
            if diag:
                click.echo(f"diagnostics written to {diag}", err=True)
            sys.exit(EXIT_NO_CONVERGENCE)
        except OSError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(EXIT_IO)
        except IdmError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


def _require(path, hint):
    if not Path(path).exists():
        raise MissingUpstreamError(path, hint)
    return Path(path)


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


@click.group(name="idmkit")
@click.version_option(version=__version__, prog_name="idmkit")
def main():
    """Illness-death multistate modeling for interval-censored cohorts."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Simulation config JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory.")
@click.option("--seed", required=True, type=int,
              help="Random seed (mandatory; overrides the config seed).")
@_guarded
def simulate(config_path, out_dir, seed):
    """Draw a synthetic cohort: exam rows plus the latent truth table."""
    _require(config_path, "create a simulation config JSON first (see FORMATS.md)")
    config = SimulationConfig.from_json(config_path)
    config = SimulationConfig.from_dict({**config.to_dict(), "seed": seed})
    out = _outdir(out_dir)
    exams, truth = simulate_cohort(config)
    exams.to_csv(out / "exams.csv", index=False)
    truth.to_csv(out / "truth.csv", index=False)
    with open(out / "sim_config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out, "simulate", inputs={"config": config_path}, seed=seed)
    click.echo(f"wrote {out / 'exams.csv'} ({len(exams)} rows, {config.n} subjects)")


@main.command("build-cohorts")
@click.option("--exams", "exams_path", required=True, type=click.Path(),
              help="Exam rows CSV (see FORMATS.md).")
@click.option("--rules", "rules_path", type=click.Path(), default=None,
              help="Rules config JSON; defaults to the built-in cohort rules.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guarded
def build_cohorts(exams_path, rules_path, out_dir):
    """Apply the exclusion flowchart and derive per-subject records."""
    from .pipeline import load_exam_rows

    _require(exams_path, "run `idmkit simulate` or point --exams at your exam CSV")
    rules = RulesConfig.from_json(_require(rules_path, "rules config not found")) \
        if rules_path else RulesConfig()
    df = load_exam_rows(exams_path)
    report, records, cohorts, rejects = build_records(df, rules)
    out = _outdir(out_dir)
    records_to_frame(records, cohorts, rules).to_csv(out / "records.csv", index=False)
    report.to_frame().to_csv(out / "flowchart.csv", index=False)
    (out / "flowchart.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    if rejects:
        pd.DataFrame(rejects).to_csv(out / "rejects.csv", index=False)
    inputs = {"exams": exams_path}
    if rules_path:
        inputs["rules"] = rules_path
    write_manifest(out, "build-cohorts", inputs=inputs)
    click.echo(report.to_text())
    if rejects:
        click.echo(f"{len(rejects)} subjects rejected for schema problems "
                   f"(see {out / 'rejects.csv'})")


def _load_records(records_path):
    _require(records_path, "run `idmkit build-cohorts` first")
    frame = pd.read_csv(records_path)
    return records_from_frame(frame)


@main.command("fit")
@click.option("--records", "records_path", required=True, type=click.Path(),
              help="Derived records CSV from build-cohorts.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--form", type=click.Choice(["spline", "weibull"]), default="spline",
              show_default=True, help="Baseline intensity family.")
@click.option("--covariates", default="", show_default=True,
              help="Comma-separated covariate column names.")
@click.option("--stratify-by", "stratify_by", default=None,
              help="Fit one model per value of this record column (e.g. cohort).")
@click.option("--kappa", type=float, default=100.0, show_default=True,
              help="Shared smoothing weight for all transitions (spline form).")
@click.option("--select-smoothing", "do_select", is_flag=True,
              help="Pick smoothing weights by cross-validated likelihood score.")
@click.option("--knots", "n_interior", type=int, default=7, show_default=True,
              help="Interior knots for the spline basis.")
@click.option("--threads", type=int, default=None,
              help="Worker threads for linear algebra (default: IDMKIT_THREADS "
                   "env var, else the BLAS setting).")
@click.option("--trace", "trace_enabled", is_flag=True,
              help="Write per-iteration optimizer records (JSON lines) in the out dir.")
@_guarded
def fit_command(records_path, out_dir, form, covariates, stratify_by, kappa,
                do_select, n_interior, threads, trace_enabled):
    """Fit the penalized illness-death model; write model JSON + hazard ratios."""
    if threads is None and os.environ.get("IDMKIT_THREADS"):
        threads = int(os.environ["IDMKIT_THREADS"])
    if threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(threads))
    records, cohort_labels = _load_records(records_path)
    cov_names = tuple(c.strip() for c in covariates.split(",") if c.strip())
    out = _outdir(out_dir)

    if stratify_by:
        if stratify_by == "cohort":
            keys = cohort_labels
        else:
            keys = []
            for rec in records:
                if stratify_by not in rec.covariates:
                    raise ConfigError(f"record {rec.id!r} lacks stratum column {stratify_by!r}")
                keys.append(f"{rec.covariates[stratify_by]:g}")
        strata = sorted(set(keys))
        groups = {s: [r for r, k in zip(records, keys) if k == s] for s in strata}
    else:
        groups = {"all": list(records)}

    hr_frames = []
    for stratum, recs in groups.items():
        if not recs:
            continue
        config = FitConfig(form=form, covariates=cov_names, n_interior=n_interior,
                           weights=PenaltyWeights(kappa, kappa, kappa) if form == "spline"
                           else PenaltyWeights(),
                           trace=str(out / f"trace_{stratum}.jsonl") if trace_enabled else None)
        if do_select and form == "spline":
            grid = [10.0**e for e in range(-2, 7)]
            config.weights = select_smoothing(recs, grid, config)
        try:
            fitted = fit(recs, config)
        except NonConvergenceError as err:
            diag = out / f"diagnostics_{stratum}.json"
            with open(diag, "w", encoding="utf-8") as fh:
                json.dump({
                    "stratum": stratum,
                    "gradient_norm": err.gradient_norm,
                    "iterations": err.iterations,
                    "last_params": None if err.last_params is None
                    else np.asarray(err.last_params).tolist(),
                }, fh, indent=2)
            err.diagnostics_path = str(diag)
            raise
        name = "model.json" if stratum == "all" else f"model_{stratum}.json"
        with open(out / name, "w", encoding="utf-8") as fh:
            payload = fitted.to_dict()
            payload["stratum"] = stratum
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if cov_names:
            hr = hazard_ratios(fitted)
            hr.insert(0, "stratum", stratum)
            hr_frames.append(hr)
        click.echo(f"stratum {stratum}: logpl={fitted.logpl:.4f} "
                   f"iterations={fitted.convergence['iterations']} "
                   f"gradient_norm={fitted.convergence['gradient_norm']:.2e}")
    if hr_frames:
        pd.concat(hr_frames, ignore_index=True).to_csv(out / "hazard_ratios.csv", index=False)
    write_manifest(out, "fit", inputs={"records": records_path})


def _load_models(model_path):
    """One or more model JSONs: a file, or a directory containing model*.json.

    Returns (models by stratum, file paths for the manifest).
    """
    p = Path(model_path)
    if p.is_dir():
        files = sorted(glob.glob(str(p / "model*.json")))
        if not files:
            raise MissingUpstreamError(model_path, "no model*.json here; run `idmkit fit`")
    else:
        files = [str(_require(p, "run `idmkit fit` first"))]
    models = {}
    for f in files:
        with open(f, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        models[payload.get("stratum", Path(f).stem)] = FittedModel.from_dict(payload)
    return models, files


def _parse_profile(text, covariate_names):
    values = dict.fromkeys(covariate_names, 0.0)
    if text:
        for part in text.split(","):
            name, _, raw = part.partition("=")
            name = name.strip()
            if name not in values:
                raise ConfigError(f"profile names unknown covariate {name!r}")
            values[name] = float(raw)
    return np.array([values[n] for n in covariate_names]), values


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(),
              help="Model JSON from fit, or a directory of model*.json strata.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--ages", default="60:100:1", show_default=True,
              help="Evaluation grid lo:hi:step.")
@click.option("--profile", "profiles", multiple=True,
              help="Covariate profile like 'sex=1,education=0' (repeatable).")
@click.option("--draws", type=int, default=2000, show_default=True,
              help="Parameter draws for the confidence bands.")
@click.option("--seed", type=int, default=2026, show_default=True,
              help="Seed for band resampling.")
@click.option("--ever-age", type=float, default=110.0, show_default=True,
              help="Upper age bound defining lifetime ('ever') risk.")
@_guarded
def predict(model_path, out_dir, ages, profiles, draws, seed, ever_age):
    """Prevalence and risk curves with 95% bands, plus the age-conditional table."""
    models, model_files = _load_models(model_path)
    try:
        lo, hi, step = (float(x) for x in ages.split(":"))
    except ValueError as err:
        raise ConfigError(f"cannot parse --ages {ages!r}: {err}") from err
    grid = np.arange(lo, hi + 1e-9, step)
    out = _outdir(out_dir)
    prev_frames, risk_frames, cond_frames = [], [], []
    for stratum, fitted in models.items():
        profile_list = list(profiles) if profiles else [""]
        for text in profile_list:
            z, values = _parse_profile(text, fitted.model.covariate_names)
            tag = {"stratum": stratum, **values} if stratum != "all" else values
            for quantity, sink in (("prevalence", prev_frames), ("risk", risk_frames)):
                curve = confidence_bands(fitted, quantity, z, base_age=lo, ages=grid,
                                         draws=draws, seed=seed)
                frame = curve.to_frame()
                frame["profile"] = ";".join(f"{k}={v}" for k, v in tag.items()) or "baseline"
                sink.append(frame)
            table = conditional_table(fitted, z, ever_age=ever_age, draws=min(draws, 1000),
                                      seed=seed)
            table.insert(0, "profile", ";".join(f"{k}={v}" for k, v in tag.items())
                         or "baseline")
            cond_frames.append(table)
    pd.concat(prev_frames, ignore_index=True).to_csv(out / "prevalence.csv", index=False)
    pd.concat(risk_frames, ignore_index=True).to_csv(out / "risk.csv", index=False)
    pd.concat(cond_frames, ignore_index=True).to_csv(out / "conditional.csv", index=False)
    write_manifest(out, "predict",
                   inputs={Path(f).name: f for f in model_files}, seed=seed)
    click.echo(f"wrote curves for {len(models)} stratum/strata to {out}")


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--horizon-year", type=int, default=None,
              help="Census reference year (defaults to the latest contact year).")
@click.option("--window", type=float, default=4.0, show_default=True,
              help="Loss-to-follow-up window in years.")
@_guarded
def census(records_path, out_dir, horizon_year, window):
    """Observation-status census per birth cohort."""
    records, cohort_labels = _load_records(records_path)
    rules = RulesConfig(inconclusive_window_years=window)
    label_to_index = {rules.cohort_label(i): i for i in range(len(rules.cohorts))}
    try:
        cohorts = [label_to_index[label] for label in cohort_labels]
    except KeyError as err:
        raise ConfigError(f"records carry unknown cohort label {err.args[0]!r}") from None
    cen = status_census(records, cohorts, rules, horizon_year=horizon_year)
    out = _outdir(out_dir)
    cen.to_frame().to_csv(out / "census.csv", index=False)
    (out / "census.txt").write_text(cen.to_text() + "\n", encoding="utf-8")
    write_manifest(out, "census", inputs={"records": records_path})
    click.echo(cen.to_text())


@main.command()
@click.option("--curves", "curves_dir", required=True, type=click.Path(),
              help="Directory holding prevalence.csv / risk.csv from predict.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guarded
def plot(curves_dir, out_dir):
    """Render curve CSVs to SVG figures (one per quantity)."""
    curves = Path(curves_dir)
    out = _outdir(out_dir)
    made = 0
    for name in ("prevalence", "risk"):
        src = curves / f"{name}.csv"
        if not src.exists():
            continue
        frame = pd.read_csv(src)
        plot_curve_frame(frame, out / f"{name}.svg")
        made += 1
    if made == 0:
        raise MissingUpstreamError(curves_dir, "no prevalence.csv or risk.csv; run `idmkit predict`")
    write_manifest(out, "plot", inputs={})
    click.echo(f"rendered {made} figure(s) to {out}")


if __name__ == "__main__":
    main()
