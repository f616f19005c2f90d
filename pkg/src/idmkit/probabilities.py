"""Transition probabilities, prevalence/risk curves, and confidence bands.

All quantities condition on being alive and disease-free at a base age
(default 60) and are pure functions of the fitted intensities; the model
is Markov, so conditioning never needs the original data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ._objective import InvalidParameterRegion, _make_block
from .exceptions import OrderingError
from .likelihood import integration_panels
from .model import IllnessDeathModel
from .quadrature import panel_nodes

DENOM_FLOOR = 1e-12
HORIZONS = {"10y": 10.0, "20y": 20.0}


def _unwrap(model):
    """Accept either an IllnessDeathModel or a FittedModel."""
    if isinstance(model, IllnessDeathModel):
        return model, None
    return model.model, getattr(model, "covariance", None)


@dataclass
class CurveTable:
    """Age-indexed probability estimates with pointwise 95% bounds."""

    quantity: str
    conditioning_age: float
    ages: np.ndarray
    estimate: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    covariate_profile: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=float)
        self.estimate = np.asarray(self.estimate, dtype=float)
        self.lo95 = np.asarray(self.lo95, dtype=float)
        self.hi95 = np.asarray(self.hi95, dtype=float)
        if not (self.ages.shape == self.estimate.shape == self.lo95.shape == self.hi95.shape):
            raise ValueError("curve columns must share one shape")
        if np.any(self.lo95 < -1e-12) or np.any(self.hi95 > 1 + 1e-12):
            raise ValueError("bounds outside [0, 1]")
        if np.any(self.lo95 > self.estimate + 1e-12) or np.any(self.estimate > self.hi95 + 1e-12):
            raise ValueError("bounds must bracket the estimate")
        if self.quantity == "risk" and np.any(np.diff(self.estimate) < -1e-10):
            raise ValueError("risk curves must be nondecreasing in age")

    def profile_string(self) -> str:
        return ";".join(f"{k}={v:g}" if isinstance(v, (int, float)) else f"{k}={v}"
                        for k, v in self.covariate_profile.items())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "age": self.ages,
            "estimate": self.estimate,
            "lo95": self.lo95,
            "hi95": self.hi95,
            "quantity": self.quantity,
            "profile": self.profile_string(),
        })


class _CurveEngine:
    """Precomputed quadrature layout for repeated curve evaluation.

    Node designs depend only on the grid and ages, so confidence-band
    resampling pays one dot product per transition per draw.
    """

    def __init__(self, template: IllnessDeathModel, base_age: float, ages: np.ndarray,
                 z, n_quad: int = 30):
        ages = np.asarray(ages, dtype=float)
        if ages.size == 0:
            raise ValueError("empty age grid")
        if np.any(np.diff(ages) <= 0):
            raise ValueError("ages must be strictly increasing")
        if ages[0] < base_age:
            raise OrderingError(f"ages start at {ages[0]}, before base age {base_age}")
        self.template = template
        self.base = float(base_age)
        self.ages = ages
        self.z = np.atleast_1d(np.asarray(z, dtype=float)) if len(template.covariate_names) \
            else np.zeros(0)
        self.blocks = tuple(_make_block(s) for s in template.specs)

        edges = set(integration_panels(template, self.base, float(ages[-1])))
        edges.update(float(a) for a in ages)
        edges = np.array(sorted(e for e in edges if self.base <= e <= ages[-1]))
        self.nodes, self.weights = panel_nodes(edges, n_quad)
        base_arr = np.full_like(self.nodes, self.base)
        b01, b02, b12 = self.blocks
        self.d01_cum = b01.cum_design(base_arr, self.nodes)
        self.d02_cum = b02.cum_design(base_arr, self.nodes)
        self.d12_cum_nodes = b12.cum_design(base_arr, self.nodes)
        self.d01_point = b01.point_design(self.nodes)
        base_ages = np.full_like(ages, self.base)
        self.d01_cum_ages = b01.cum_design(base_ages, ages)
        self.d02_cum_ages = b02.cum_design(base_ages, ages)
        self.d12_cum_ages = b12.cum_design(base_ages, ages)
        # nodes are sorted, so each age owns a prefix of them
        self.prefix = np.searchsorted(self.nodes, ages + 1e-12, side="right")
        self.mask = self.nodes[None, :] < (ages[:, None] + 1e-12)

    def _efactors(self, model: IllnessDeathModel):
        if self.z.size == 0:
            return 1.0, 1.0, 1.0
        return tuple(math.exp(float(s.beta @ self.z)) for s in model.specs)

    def evaluate(self, model: IllnessDeathModel) -> dict:
        e1, e2, e3 = self._efactors(model)
        th = [s.theta for s in model.specs]
        b01, b02, b12 = self.blocks
        a01n = b01.value(self.d01_cum, th[0]) * e1
        a02n = b02.value(self.d02_cum, th[1]) * e2
        r12n = b12.value(self.d12_cum_nodes, th[2]) * e3
        alpha01n = b01.value(self.d01_point, th[0]) * e1
        core = self.weights * np.exp(-(a01n + a02n)) * alpha01n

        cum = np.concatenate([[0.0], np.cumsum(core)])
        risk = cum[self.prefix]

        a01a = b01.value(self.d01_cum_ages, th[0]) * e1
        a02a = b02.value(self.d02_cum_ages, th[1]) * e2
        r12a = b12.value(self.d12_cum_ages, th[2]) * e3
        p00 = np.exp(-(a01a + a02a))

        expo = np.where(self.mask, r12n[None, :] - r12a[:, None], -np.inf)
        p01 = np.sum(core[None, :] * np.exp(expo), axis=1)  # -A12(u, t_j) <= 0 on mask
        return {"risk": risk, "p00": p00, "p01": p01}


def transition_probabilities(model, s: float, t: float, z=(), n_quad: int = 30):
    """State-occupation probabilities ``(P00, P01, P02)`` from state 0 at age s.

    ``P00`` is the disease-free survival, ``P01`` integrates onset at every
    intermediate age followed by post-onset survival, and ``P02`` is the
    complement. Ages beyond a spline boundary use the constant-intensity
    tail rather than raising.
    """
    mdl, _ = _unwrap(model)
    if t < s:
        raise OrderingError(f"need s <= t, got s={s}, t={t}")
    if t == s:
        return 1.0, 0.0, 0.0
    engine = _CurveEngine(mdl, s, np.array([t]), z, n_quad=n_quad)
    vals = engine.evaluate(mdl)
    p00 = float(vals["p00"][0])
    p01 = float(min(vals["p01"][0], 1.0))
    p02 = min(max(1.0 - p00 - p01, 0.0), 1.0)
    return p00, p01, p02


def state1_survival(model, s: float, t: float, z=()):
    """``P11(s, t)``: probability of staying alive after onset at age s."""
    from .hazards import cumulative_intensity

    mdl, _ = _unwrap(model)
    return math.exp(-cumulative_intensity(mdl.h12, s, t, z, extrapolate=True))


def _point_curve(model, quantity, z, base_age, ages, n_quad) -> CurveTable:
    mdl, _ = _unwrap(model)
    ages = np.asarray(ages, dtype=float)
    engine = _CurveEngine(mdl, base_age, ages, z, n_quad=n_quad)
    vals = engine.evaluate(mdl)
    meta = {"band_method": "none", "draws": 0,
            "extrapolated": bool(ages[-1] > mdl.upper_boundary())}
    if quantity == "risk":
        est = vals["risk"]
    else:
        denom = vals["p00"] + vals["p01"]
        ok = denom > DENOM_FLOOR
        if not ok.all():
            cut = int(np.argmin(ok))
            meta["truncated_at"] = float(ages[cut])
            ages, denom = ages[:cut], denom[:cut]
            vals = {k: v[:cut] for k, v in vals.items()}
        est = vals["p01"] / (vals["p00"] + vals["p01"])
    est = np.clip(est, 0.0, 1.0)
    profile = dict(zip(mdl.covariate_names, np.atleast_1d(z))) if mdl.covariate_names else {}
    return CurveTable(quantity, base_age, ages, est, est.copy(), est.copy(), profile, meta)


def prevalence_curve(model, z=(), base_age: float = 60.0, ages=None,
                     n_quad: int = 30) -> CurveTable:
    """Probability of occupying the ill state at each age, conditional on
    being alive and disease-free at ``base_age``:
    ``P01(base, t) / (P00(base, t) + P01(base, t))``; zero at the base age.
    Ages where the alive probability underflows are truncated with a
    metadata note.
    """
    if ages is None:
        ages = np.arange(base_age, 101.0)
    return _point_curve(model, "prevalence", z, base_age, ages, n_quad)


def risk_curve(model, z=(), base_age: float = 60.0, ages=None,
               n_quad: int = 30) -> CurveTable:
    """Cumulative onset probability ``int_base^t P00(base,u) a01(u) du``,
    counting onsets regardless of subsequent death; nondecreasing in age."""
    if ages is None:
        ages = np.arange(base_age, 101.0)
    return _point_curve(model, "risk", z, base_age, ages, n_quad)


@dataclass(frozen=True)
class ConditionalEstimate:
    estimate: float
    lo95: float
    hi95: float
    horizon: str
    age: float


def conditional_probability(model, z=(), s: float = 60.0, horizon: str = "10y",
                            ever_age: float = 110.0, draws: int = 1000,
                            seed: int = 2026, n_quad: int = 30) -> ConditionalEstimate:
    """Probability of onset within a horizon given disease-free at age s.

    ``horizon`` is ``"10y"``, ``"20y"`` or ``"ever"`` (integrating to
    ``ever_age``). The interval comes from parameter resampling when the
    model carries a covariance; otherwise it collapses onto the estimate.
    """
    mdl, cov = _unwrap(model)
    if horizon in HORIZONS:
        w = HORIZONS[horizon]
    elif horizon == "ever":
        w = ever_age - s
    else:
        w = float(horizon)
    if w < 0:
        raise OrderingError(f"horizon width {w} is negative at age {s}")
    if w == 0:
        return ConditionalEstimate(0.0, 0.0, 0.0, str(horizon), s)
    ages = np.array([s + w])
    engine = _CurveEngine(mdl, s, ages, z, n_quad=n_quad)
    est = float(np.clip(engine.evaluate(mdl)["risk"][0], 0.0, 1.0))
    if cov is None:
        return ConditionalEstimate(est, est, est, str(horizon), s)
    samples = _parameter_draws(mdl, cov, draws, seed)[0]
    vals = []
    for row in samples:
        try:
            vals.append(float(engine.evaluate(mdl.unpack(row))["risk"][0]))
        except (InvalidParameterRegion, ValueError):
            continue  # draw left the parameter domain (e.g. negative weibull shape)
    lo, hi = np.percentile(vals, [2.5, 97.5]) if vals else (est, est)
    return ConditionalEstimate(est, float(min(np.clip(lo, 0, 1), est)),
                               float(max(np.clip(hi, 0, 1), est)), str(horizon), s)


def conditional_table(model, z=(), ages=(60, 65, 70, 75, 80),
                      horizons=("10y", "20y", "ever"), ever_age: float = 110.0,
                      finite_support_age: float = 95.0, draws: int = 1000,
                      seed: int = 2026) -> pd.DataFrame:
    """Age-by-horizon table of conditional onset probabilities.

    Finite-window cells whose target age exceeds ``finite_support_age``
    stay blank (NaN), mirroring how such tables drop the 20-year column at
    the oldest baseline age.
    """
    rows = []
    for age in ages:
        row = {"age": float(age)}
        for h in horizons:
            if h in HORIZONS and age + HORIZONS[h] > finite_support_age:
                row[h] = math.nan
                continue
            est = conditional_probability(model, z, s=float(age), horizon=h,
                                          ever_age=ever_age, draws=draws, seed=seed)
            row[h] = est.estimate
        rows.append(row)
    return pd.DataFrame(rows, columns=["age", *horizons])


def marginal_risk(model, z_matrix, base_age: float = 60.0, age: float = 85.0,
                  n_quad: int = 30) -> float:
    """Population-average onset risk ``mean_i risk(age | z_i)``.

    This is the quantity a cohort-level estimator targets when covariates
    vary across subjects.
    """
    mdl, _ = _unwrap(model)
    z_matrix = np.atleast_2d(np.asarray(z_matrix, dtype=float))
    engine = _CurveEngine(mdl, base_age, np.array([age]), np.zeros(z_matrix.shape[1]),
                          n_quad=n_quad)
    b01, b02, _ = engine.blocks
    th = [s.theta for s in mdl.specs]
    a01n = b01.value(engine.d01_cum, th[0])
    a02n = b02.value(engine.d02_cum, th[1])
    alpha01n = b01.value(engine.d01_point, th[0])
    e1 = np.exp(z_matrix @ mdl.h01.beta)
    e2 = np.exp(z_matrix @ mdl.h02.beta)
    expo = -(np.outer(e1, a01n) + np.outer(e2, a02n))
    per_subject = (np.exp(expo) * alpha01n[None, :] * e1[:, None]) @ engine.weights
    return float(np.mean(np.clip(per_subject, 0.0, 1.0)))


def _parameter_draws(mdl: IllnessDeathModel, covariance, draws: int, seed: int):
    """MVN parameter draws about the fitted optimum; non-PSD covariances
    are repaired by eigenvalue clipping (flagged)."""
    mean = mdl.pack()
    cov = np.asarray(covariance, dtype=float)
    cov = (cov + cov.T) / 2.0
    eigval, eigvec = np.linalg.eigh(cov)
    repaired = bool(np.any(eigval < -1e-10 * max(1.0, float(np.abs(eigval).max()))))
    root = eigvec * np.sqrt(np.clip(eigval, 0.0, None))[None, :]
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((draws, mean.size))
    return mean[None, :] + eps @ root.T, repaired


def confidence_bands(model, quantity: str = "risk", z=(), base_age: float = 60.0,
                     ages=None, draws: int = 2000, seed: int = 2026,
                     n_quad: int = 30) -> CurveTable:
    """Pointwise 95% bands by normal resampling of the fitted parameters.

    Each draw recomputes the requested curve; bands are the 2.5/97.5
    percentiles across draws, deterministic under a fixed seed, and always
    bracket the point estimate.
    """
    mdl, cov = _unwrap(model)
    if cov is None:
        raise ValueError("confidence bands need a fitted covariance")
    if draws < 200:
        raise ValueError("use at least 200 draws for stable percentiles")
    point = _point_curve(model, quantity, z, base_age,
                         np.arange(base_age, 101.0) if ages is None else ages, n_quad)
    ages = point.ages
    engine = _CurveEngine(mdl, base_age, ages, z, n_quad=n_quad)
    samples, repaired = _parameter_draws(mdl, cov, draws, seed)
    curves = np.empty((samples.shape[0], ages.size))
    skipped = 0
    kept = 0
    for row in samples:
        try:
            vals = engine.evaluate(mdl.unpack(row))
        except (InvalidParameterRegion, ValueError):
            skipped += 1
            continue
        if quantity == "risk":
            curves[kept] = vals["risk"]
        else:
            denom = np.maximum(vals["p00"] + vals["p01"], DENOM_FLOOR)
            curves[kept] = vals["p01"] / denom
        kept += 1
    if kept == 0:
        raise ValueError("every parameter draw fell outside the model domain")
    curves = np.clip(curves[:kept], 0.0, 1.0)
    lo = np.minimum(np.percentile(curves, 2.5, axis=0), point.estimate)
    hi = np.maximum(np.percentile(curves, 97.5, axis=0), point.estimate)
    meta = dict(point.metadata)
    meta.update({"band_method": "normal-resampling", "draws": draws,
                 "skipped_draws": skipped, "covariance_repaired": repaired})
    return CurveTable(quantity, base_age, ages, point.estimate, lo, hi,
                      point.covariate_profile, meta)
