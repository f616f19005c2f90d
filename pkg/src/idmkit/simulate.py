"""Synthetic cohorts from known intensities, and estimator evaluation oracles.

Latent onset/death times are drawn by inverting the true cumulative
intensities (exactly for constant/piecewise-constant hazards, by root
finding otherwise), then coarsened by an exam schedule into the same raw
row format the ingestion pipeline consumes. The latent truth table stays
available for bias evaluation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import brentq

from .exceptions import ConfigError
from .probabilities import CurveTable

LATENT_CAP = 250.0


# -- true intensities -------------------------------------------------------


class PiecewiseConstantIntensity:
    """Hazard constant on age bands; closed forms for every quantity."""

    def __init__(self, breaks, rates):
        self.breaks = np.asarray(breaks, dtype=float)
        self.rates = np.asarray(rates, dtype=float)
        if self.rates.size != self.breaks.size + 1:
            raise ConfigError("piecewise intensity needs len(rates) == len(breaks) + 1")
        if np.any(self.rates < 0) or np.any(np.diff(self.breaks) <= 0):
            raise ConfigError("piecewise intensity needs nonnegative rates, increasing breaks")

    exact_inversion = True

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        return self.rates[np.searchsorted(self.breaks, t, side="right")]

    def cumulative(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        edges = np.concatenate([[-np.inf], self.breaks, [np.inf]])
        total = np.zeros(np.broadcast(a, b).shape)
        for i, rate in enumerate(self.rates):
            lo = np.maximum(a, edges[i])
            hi = np.minimum(b, edges[i + 1])
            total = total + rate * np.clip(hi - lo, 0.0, None)
        return total if total.shape else float(total)

    def to_dict(self):
        return {"kind": "piecewise", "breaks": self.breaks.tolist(),
                "rates": self.rates.tolist()}


class ConstantIntensity(PiecewiseConstantIntensity):
    def __init__(self, rate):
        super().__init__([], [rate])
        self.rate = float(rate)

    def to_dict(self):
        return {"kind": "constant", "rate": self.rate}


class WeibullIntensity:
    """Hazard ``(shape/scale) (t/scale)^(shape-1)`` on the age axis."""

    exact_inversion = False

    def __init__(self, shape, scale):
        if not (shape > 0 and scale > 0):
            raise ConfigError("weibull intensity needs positive shape and scale")
        self.shape = float(shape)
        self.scale = float(scale)

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        return (self.shape / self.scale) * (t / self.scale) ** (self.shape - 1.0)

    def cumulative(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = (b / self.scale) ** self.shape - (a / self.scale) ** self.shape
        return out if out.shape else float(out)

    def to_dict(self):
        return {"kind": "weibull", "shape": self.shape, "scale": self.scale}


def intensity_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "constant":
        return ConstantIntensity(data["rate"])
    if kind == "piecewise":
        return PiecewiseConstantIntensity(data["breaks"], data["rates"])
    if kind == "weibull":
        return WeibullIntensity(data["shape"], data["scale"])
    raise ConfigError(f"unknown intensity kind {kind!r}")


def invert_total_cumulative(intensities, multipliers, start: float, target: float) -> float:
    """Age t with ``sum_i m_i A_i(start, t) = target`` (inverse transform).

    Exact band-walk when all components are piecewise-constant, bisection
    otherwise; returns +inf when the target exceeds the mass up to the cap.
    """
    if target <= 0:
        return start

    def total(t):
        return sum(m * i.cumulative(start, t) for i, m in zip(intensities, multipliers))

    if all(i.exact_inversion for i in intensities):
        edges = sorted({float(b) for i in intensities for b in i.breaks if b > start})
        edges = [start, *edges, LATENT_CAP]
        acc = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            rate = sum(m * float(i.hazard((lo + hi) / 2.0)) for i, m in zip(intensities, multipliers))
            gain = rate * (hi - lo)
            if acc + gain >= target:
                return lo + (target - acc) / rate if rate > 0 else np.inf
            acc += gain
        return np.inf
    if total(LATENT_CAP) < target:
        return np.inf
    return float(brentq(lambda t: total(t) - target, start, LATENT_CAP, xtol=1e-10))


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class CovariateSpec:
    """One simulated covariate with its true per-transition log hazard ratios."""

    name: str
    dist: str = "bernoulli"  # or "normal"
    p: float = 0.5
    mean: float = 0.0
    sd: float = 1.0
    log_hr: dict = field(default_factory=dict)  # keys "0->1", "0->2", "1->2"

    def __post_init__(self):
        if self.dist not in ("bernoulli", "normal"):
            raise ConfigError(f"unknown covariate distribution {self.dist!r}")
        if self.dist == "bernoulli" and not 0.0 <= self.p <= 1.0:
            raise ConfigError("bernoulli p must lie in [0, 1]")

    def draw(self, rng):
        if self.dist == "bernoulli":
            return float(rng.random() < self.p)
        return float(rng.normal(self.mean, self.sd))

    def to_dict(self):
        return {"name": self.name, "dist": self.dist, "p": self.p,
                "mean": self.mean, "sd": self.sd, "log_hr": dict(self.log_hr)}


@dataclass(frozen=True)
class SimulationConfig:
    """Everything a reproducible cohort draw needs; the seed is mandatory."""

    n: int
    seed: int
    intensity01: object = field(default_factory=lambda: WeibullIntensity(3.0, 95.0))
    intensity02: object = field(default_factory=lambda: WeibullIntensity(4.0, 105.0))
    intensity12: object = field(default_factory=lambda: ConstantIntensity(0.30))
    covariates: tuple = ()
    start_age: float = 60.0
    admin_end_age: float = 98.0
    exam_interval_years: float = 2.0
    exam_jitter_years: float = 0.3
    exam_miss_prob: float = 0.1
    conclusive_at_death_prob: float = 0.25
    birth_year: int = 1930

    def __post_init__(self):
        if self.n <= 0:
            raise ConfigError("n must be positive")
        if self.seed is None:
            raise ConfigError("a seed is mandatory for reproducibility")
        if self.exam_interval_years <= 0:
            raise ConfigError("exam interval must be positive")
        for name in ("exam_miss_prob", "conclusive_at_death_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.exam_jitter_years < 0 or self.exam_jitter_years >= self.exam_interval_years / 2:
            raise ConfigError("exam jitter must be in [0, interval/2)")
        if not self.start_age < self.admin_end_age:
            raise ConfigError("start_age must be below admin_end_age")
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @property
    def intensities(self):
        return {"0->1": self.intensity01, "0->2": self.intensity02, "1->2": self.intensity12}

    def multipliers(self, z: dict):
        out = []
        for key in ("0->1", "0->2", "1->2"):
            lp = sum(spec.log_hr.get(key, 0.0) * z[spec.name] for spec in self.covariates)
            out.append(math.exp(lp))
        return tuple(out)

    def to_dict(self):
        return {
            "n": self.n, "seed": self.seed,
            "intensities": {k: v.to_dict() for k, v in self.intensities.items()},
            "covariates": [c.to_dict() for c in self.covariates],
            "start_age": self.start_age, "admin_end_age": self.admin_end_age,
            "exam_interval_years": self.exam_interval_years,
            "exam_jitter_years": self.exam_jitter_years,
            "exam_miss_prob": self.exam_miss_prob,
            "conclusive_at_death_prob": self.conclusive_at_death_prob,
            "birth_year": self.birth_year,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        try:
            intens = data.get("intensities", {})
            kwargs = {k: v for k, v in data.items() if k not in ("intensities", "covariates")}
            for key, attr in (("0->1", "intensity01"), ("0->2", "intensity02"),
                              ("1->2", "intensity12")):
                if key in intens:
                    kwargs[attr] = intensity_from_dict(intens[key])
            kwargs["covariates"] = tuple(
                CovariateSpec(**c) for c in data.get("covariates", ())
            )
            return cls(**kwargs)
        except (KeyError, TypeError) as err:
            raise ConfigError(f"invalid simulation config: {err}") from err

    @classmethod
    def from_json(cls, path) -> "SimulationConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(
                    f"malformed JSON in {path} at line {err.lineno}, column {err.colno}: {err.msg}"
                ) from err
        return cls.from_dict(data)


def default_scenario(n: int = 2000, seed: int = 1, **overrides) -> SimulationConfig:
    """The shipped benchmark scenario: Weibull truths, 2-year exams, one
    normal covariate doubling the onset hazard, 25% conclusive deaths."""
    kwargs = dict(
        n=n, seed=seed,
        covariates=(CovariateSpec("risk_score", dist="normal", mean=0.0, sd=1.0,
                                  log_hr={"0->1": math.log(2.0)}),),
    )
    kwargs.update(overrides)
    return SimulationConfig(**kwargs)


# -- cohort generation -----------------------------------------------------------


def simulate_cohort(config: SimulationConfig) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Draw a cohort and its observation layer.

    Returns ``(exams, truth)``: exam rows in the ingestion schema (one row
    per attended assessment, per-subject constants repeated) and the latent
    truth table with exact event times. Per-subject generators are spawned
    from the master seed, so any partition of subjects reproduces the
    serial stream.
    """
    exam_rows = []
    truth_rows = []
    i01, i02, i12 = config.intensity01, config.intensity02, config.intensity12
    for i in range(config.n):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(i,)))
        sid = f"s{i:06d}"
        z = {spec.name: spec.draw(rng) for spec in config.covariates}
        m1, m2, m3 = config.multipliers(z)

        exit_draw = rng.exponential()
        t_exit = invert_total_cumulative((i01, i02), (m1, m2), config.start_age, exit_draw)
        onset_prob = 0.0
        if np.isfinite(t_exit):
            h1 = m1 * float(i01.hazard(t_exit))
            h2 = m2 * float(i02.hazard(t_exit))
            onset_prob = h1 / (h1 + h2) if h1 + h2 > 0 else 0.0
        to_onset = rng.random() < onset_prob
        if to_onset:
            t_onset = t_exit
            t_death = invert_total_cumulative((i12,), (m3,), t_onset, rng.exponential())
        else:
            t_onset = np.inf
            t_death = t_exit

        # exam schedule: enrollment visit at the start age, then jittered,
        # possibly missed follow-ups
        exams = [config.start_age]
        k = 1
        while True:
            age = config.start_age + k * config.exam_interval_years \
                + rng.uniform(-config.exam_jitter_years, config.exam_jitter_years)
            if age > config.admin_end_age:
                break
            if rng.random() >= config.exam_miss_prob:
                exams.append(age)
            k += 1

        died_in_study = t_death <= config.admin_end_age
        death_age = round(float(t_death), 6) if died_in_study else None
        last_contact = death_age if died_in_study else config.admin_end_age
        diagnosed_age = None
        review_onset = None
        review = ""
        statuses = []
        for age in exams:
            if age >= t_death:
                break
            if age > t_onset:
                diagnosed_age = age
                statuses.append((age, "dementia-diagnosed"))
                break
            statuses.append((age, "normal"))
        if died_in_study and diagnosed_age is None:
            if rng.random() < config.conclusive_at_death_prob:
                if t_onset < t_death:
                    review = "dementia"
                    review_onset = round(float(t_onset), 6)
                else:
                    review = "no-dementia"

        base = {
            "subject_id": sid,
            "birth_year": config.birth_year,
            "sex": "",
            "education": "",
            "death_age": "" if death_age is None else death_age,
            "last_contact_age": round(float(last_contact), 6),
            "onset_age": "" if review_onset is None else review_onset,
            "death_review": review,
        }
        base.update({spec.name: z[spec.name] for spec in config.covariates})
        for age, status in statuses:
            exam_rows.append({**base, "exam_age": round(float(age), 6),
                              "cognitive_status": status})
        if not statuses:  # died before any follow-up after enrollment
            exam_rows.append({**base, "exam_age": round(float(config.start_age), 6),
                              "cognitive_status": "normal"})

        truth_rows.append({
            "subject_id": sid,
            **{spec.name: z[spec.name] for spec in config.covariates},
            "latent_onset": float(t_onset) if np.isfinite(t_onset) else np.nan,
            "latent_death": float(t_death) if np.isfinite(t_death) else np.nan,
        })
    exams = pd.DataFrame(exam_rows)
    truth = pd.DataFrame(truth_rows)
    return exams, truth


# -- naive comparator ---------------------------------------------------------------


def naive_onset_times(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(entry, time, event) triplets of the naive death-censoring view:
    onset imputed at the interval midpoint, death treated as independent
    censoring, undiagnosed alive subjects censored at the last healthy age."""
    entry, time, event = [], [], []
    for rec in records:
        entry.append(rec.entry_age)
        if rec.onset_exact is not None:
            time.append(rec.onset_exact)
            event.append(True)
        elif rec.onset_interval is not None:
            lo, hi = rec.onset_interval
            time.append(0.5 * (lo + hi))
            event.append(True)
        elif rec.dead:
            time.append(rec.death_age)
            event.append(False)
        else:
            time.append(rec.last_healthy_age)
            event.append(False)
    return np.asarray(entry), np.asarray(time), np.asarray(event, dtype=bool)


def naive_risk_estimate(records, ages=None, base_age: float = 60.0) -> CurveTable:
    """One-minus-product-limit onset curve that censors at death.

    Deliberately reproduces the conventional analysis: death acts as
    independent censoring and interval-censored onsets sit at their
    midpoint, so onsets hidden between the last assessment and death
    (and their hazard mass) are ignored.
    """
    entry, time, event = naive_onset_times(records)
    if ages is None:
        ages = np.arange(base_age, 101.0)
    ages = np.asarray(ages, dtype=float)
    order = np.argsort(time, kind="stable")
    time, entry, event = time[order], entry[order], event[order]
    event_times = np.unique(time[event])
    surv = 1.0
    steps = []
    for t in event_times:
        at_risk = int(np.sum((entry < t) & (time >= t)))
        d = int(np.sum(event & (time == t)))
        if at_risk > 0:
            surv *= 1.0 - d / at_risk
        steps.append((t, surv))
    est = np.zeros_like(ages)
    for j, age in enumerate(ages):
        s = 1.0
        for t, value in steps:
            if t <= age:
                s = value
            else:
                break
        est[j] = 1.0 - s
    est = np.clip(est, 0.0, 1.0)
    return CurveTable("risk", base_age, ages, est, est.copy(), est.copy(),
                      {}, {"band_method": "none", "estimator": "naive-product-limit"})


# -- truth curves and recovery reports -------------------------------------------


def truth_risk_curve(config: SimulationConfig, ages, z: dict | None = None) -> np.ndarray:
    """Exact onset risk ``int P00 a01`` from the true intensities.

    Closed form for piecewise-constant truths, adaptive quadrature
    otherwise — independent of the model-based curve code.
    """
    z = z or {spec.name: 0.0 for spec in config.covariates}
    m1, m2, _ = config.multipliers(z)
    i01, i02 = config.intensity01, config.intensity02
    s0 = config.start_age
    ages = np.asarray(ages, dtype=float)
    if np.any(ages < s0):
        raise ValueError(f"truth curves start at age {s0}; grid begins at {ages.min()}")

    def integrand(u):
        expo = m1 * i01.cumulative(s0, u) + m2 * i02.cumulative(s0, u)
        return math.exp(-expo) * m1 * float(i01.hazard(u))

    pieces = sorted({float(b) for i in (i01, i02) for b in getattr(i, "breaks", [])})
    out = np.zeros_like(ages)
    acc = 0.0
    prev = s0
    for j, t in enumerate(ages):
        if t > prev:
            pts = [p for p in pieces if prev < p < t] or None
            val, _ = quad(integrand, prev, t, points=pts, limit=200)
            acc += val
            prev = t
        out[j] = acc
    return out


def truth_prevalence_curve(config: SimulationConfig, ages, z: dict | None = None) -> np.ndarray:
    """Exact prevalence from the true intensities (quadrature oracle)."""
    z = z or {spec.name: 0.0 for spec in config.covariates}
    m1, m2, m3 = config.multipliers(z)
    i01, i02, i12 = config.intensity01, config.intensity02, config.intensity12
    s0 = config.start_age
    out = np.zeros(len(ages))
    for j, t in enumerate(np.asarray(ages, dtype=float)):
        if t <= s0:
            continue

        def integrand(u, t=t):
            expo = m1 * i01.cumulative(s0, u) + m2 * i02.cumulative(s0, u) \
                + m3 * i12.cumulative(u, t)
            return math.exp(-expo) * m1 * float(i01.hazard(u))

        p01, _ = quad(integrand, s0, t, limit=200)
        p00 = math.exp(-(m1 * i01.cumulative(s0, t) + m2 * i02.cumulative(s0, t)))
        out[j] = p01 / (p00 + p01)
    return out


@dataclass
class RecoveryReport:
    """Curve and hazard-ratio recovery errors of a fitted model."""

    ages: np.ndarray
    risk_mae: float
    risk_max: float
    prevalence_mae: float
    prevalence_max: float
    hr_table: pd.DataFrame

    def to_dict(self):
        return {
            "risk_mae": self.risk_mae, "risk_max": self.risk_max,
            "prevalence_mae": self.prevalence_mae, "prevalence_max": self.prevalence_max,
            "hr": self.hr_table.to_dict(orient="records"),
        }


def evaluate_recovery(fitted, config: SimulationConfig, ages=None) -> RecoveryReport:
    """Compare fitted baseline risk/prevalence curves and hazard ratios
    against the simulation truth on a common age grid."""
    from .probabilities import prevalence_curve, risk_curve

    if ages is None:
        ages = np.arange(60.0, 96.0)
    ages = np.asarray(ages, dtype=float)
    if ages.size == 0 or np.any(np.diff(ages) <= 0):
        raise ValueError("age grid must be nonempty and strictly increasing")
    if np.any(ages < config.start_age):
        raise ValueError(
            f"age grid extends below the truth support (start age {config.start_age})"
        )
    model = fitted.model if hasattr(fitted, "model") else fitted
    n_cov = len(model.covariate_names)
    z0 = np.zeros(n_cov)
    fit_risk = risk_curve(model, z0, base_age=config.start_age, ages=ages).estimate
    fit_prev = prevalence_curve(model, z0, base_age=config.start_age, ages=ages).estimate
    true_risk = truth_risk_curve(config, ages)
    true_prev = truth_prevalence_curve(config, ages)
    risk_err = np.abs(fit_risk - true_risk)
    prev_err = np.abs(fit_prev - true_prev)

    rows = []
    for spec in config.covariates:
        if spec.name not in model.covariate_names:
            continue
        j = model.covariate_names.index(spec.name)
        for key, hspec in zip(("0->1", "0->2", "1->2"), model.specs):
            true_lhr = spec.log_hr.get(key, 0.0)
            est_lhr = float(hspec.beta[j])
            rows.append({"transition": key, "covariate": spec.name,
                         "true_hr": math.exp(true_lhr), "est_hr": math.exp(est_lhr),
                         "abs_log_error": abs(est_lhr - true_lhr)})
    return RecoveryReport(
        ages=ages,
        risk_mae=float(risk_err.mean()), risk_max=float(risk_err.max()),
        prevalence_mae=float(prev_err.mean()), prevalence_max=float(prev_err.max()),
        hr_table=pd.DataFrame(rows, columns=["transition", "covariate", "true_hr",
                                             "est_hr", "abs_log_error"]),
    )
