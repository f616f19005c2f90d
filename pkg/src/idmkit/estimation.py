"""Penalized maximum likelihood estimation of the illness-death model.

The optimizer runs Levenberg-Marquardt-damped Newton ascent on the full
parameter vector. Curvature starts from the per-subject gradient outer
product plus the analytic penalty Hessian and switches to an exact
(finite-differenced analytic-gradient) Hessian to polish convergence;
accepted steps never decrease the objective.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from ._objective import InvalidParameterRegion, PenalizedObjective
from .exceptions import (
    ConfigError,
    LikelihoodNumericError,
    NonConvergenceError,
)
from .hazards import SPLINE, WEIBULL, HazardSpec, default_knot_grid, spline_spec_from_intensity
from .likelihood import pairwise_sum
from .model import IllnessDeathModel

TRANSITION_KEYS = ("0->1", "0->2", "1->2")


@dataclass(frozen=True)
class PenaltyWeights:
    """Per-transition roughness weights; zero disables the penalty."""

    kappa01: float = 0.0
    kappa02: float = 0.0
    kappa12: float = 0.0

    def __post_init__(self):
        for name in ("kappa01", "kappa02", "kappa12"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def as_tuple(self):
        return (self.kappa01, self.kappa02, self.kappa12)


@dataclass
class FitConfig:
    """Options controlling :func:`fit`."""

    form: str = SPLINE
    covariates: tuple[str, ...] = ()
    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    n_interior: int = 7
    order: int = 4
    grids: dict | None = None
    n_quad: int = 30
    censor_at_last_alive: bool = False
    tol_logpl: float = 1e-6
    tol_grad: float = 1e-4
    max_iter: int = 500
    init_model: IllnessDeathModel | None = None
    trace: object = None  # path or callable(dict)

    def __post_init__(self):
        if self.form not in (SPLINE, WEIBULL):
            raise ConfigError(f"unknown fit form {self.form!r}")
        self.covariates = tuple(self.covariates)


@dataclass
class FittedModel:
    """Result of :func:`fit`: specs, smoothing weights, optimum and covariance."""

    model: IllnessDeathModel
    weights: PenaltyWeights
    logpl: float
    loglik: float
    covariance: np.ndarray | None
    convergence: dict
    covariance_pseudo_inverse: bool = False
    weakly_identified: tuple[str, ...] = ()

    @property
    def specs(self):
        return self.model.specs

    @property
    def covariate_names(self):
        return self.model.covariate_names

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "weights": self.weights.as_tuple(),
            "logpl": self.logpl,
            "loglik": self.loglik,
            "covariance": None if self.covariance is None else self.covariance.tolist(),
            "convergence": self.convergence,
            "covariance_pseudo_inverse": self.covariance_pseudo_inverse,
            "weakly_identified": list(self.weakly_identified),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FittedModel":
        cov = data.get("covariance")
        return cls(
            model=IllnessDeathModel.from_dict(data["model"]),
            weights=PenaltyWeights(*data.get("weights", (0.0, 0.0, 0.0))),
            logpl=data["logpl"],
            loglik=data.get("loglik", data["logpl"]),
            covariance=None if cov is None else np.asarray(cov, dtype=float),
            convergence=data.get("convergence", {}),
            covariance_pseudo_inverse=data.get("covariance_pseudo_inverse", False),
            weakly_identified=tuple(data.get("weakly_identified", ())),
        )


def penalized_loglik(records, model: IllnessDeathModel, weights: PenaltyWeights,
                     n_quad: int = 30, censor_at_last_alive: bool = False) -> float:
    """Total log-likelihood minus the roughness penalties."""
    obj = PenalizedObjective(records, model, kappas=weights.as_tuple(),
                             n_quad=n_quad, censor_at_last_alive=censor_at_last_alive)
    return obj.value(model.pack())


# -- initialization ------------------------------------------------------------


def _onset_proxy(rec):
    if rec.onset_exact is not None:
        return rec.onset_exact
    if rec.onset_interval is not None:
        lo, hi = rec.onset_interval
        return 0.5 * (lo + hi)
    return None


def _weibull_prefit(entry, exit_, event):
    """Crude Weibull MLE on left-truncated exact exposure data."""
    entry = np.asarray(entry, dtype=float)
    exit_ = np.asarray(exit_, dtype=float)
    event = np.asarray(event, dtype=bool)
    keep = exit_ > entry + 1e-9
    entry, exit_, event = entry[keep], exit_[keep], event[keep]
    if entry.size == 0 or not event.any():
        return 1.0, 200.0

    log_exit = np.log(exit_)
    log_entry = np.log(entry)

    def nll(p):
        k, s = math.exp(p[0]), math.exp(p[1])
        logs = math.log(s)
        with np.errstate(over="ignore"):
            cum = np.exp(k * (log_exit - logs)) - np.exp(k * (log_entry - logs))
            ll = np.sum(np.log(k / s) + (k - 1.0) * (log_exit[event] - logs)) - cum.sum()
        return -ll if np.isfinite(ll) else 1e12

    res = minimize(nll, x0=np.array([0.0, math.log(np.median(exit_) * 2.0)]),
                   method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": 400})
    k, s = math.exp(res.x[0]), math.exp(res.x[1])
    return float(np.clip(k, 0.05, 50.0)), float(np.clip(s, 1e-2, 1e4))


def _initial_model(records, config: FitConfig, grids) -> tuple[IllnessDeathModel, tuple[str, ...]]:
    """Weibull pre-fits per transition (midpoint-imputed onsets), projected
    onto the spline basis when fitting the spline form."""
    rows = {key: ([], [], []) for key in TRANSITION_KEYS}
    weak = []
    for rec in records:
        proxy = _onset_proxy(rec)
        stop01 = proxy if proxy is not None else rec.last_healthy_age
        rows["0->1"][0].append(rec.entry_age)
        rows["0->1"][1].append(stop01)
        rows["0->1"][2].append(proxy is not None)
        stop02 = proxy if proxy is not None else (rec.death_age if rec.dead else rec.last_healthy_age)
        rows["0->2"][0].append(rec.entry_age)
        rows["0->2"][1].append(stop02)
        rows["0->2"][2].append(rec.dead and proxy is None)
        if proxy is not None:
            rows["1->2"][0].append(proxy)
            rows["1->2"][1].append(rec.death_age if rec.dead else rec.last_alive_age)
            rows["1->2"][2].append(rec.dead)

    n_cov = len(config.covariates)
    specs = []
    for key in TRANSITION_KEYS:
        entry, exit_, event = rows[key]
        if not any(event):
            weak.append(key)
        k, s = _weibull_prefit(entry, exit_, event)
        if config.form == WEIBULL:
            specs.append(HazardSpec(key, WEIBULL, np.array([k, s]), np.zeros(n_cov)))
        else:
            grid = grids[key]
            fn = lambda t, k=k, s=s: (k / s) * (t / s) ** (k - 1.0)
            specs.append(spline_spec_from_intensity(key, grid, fn, n_beta=n_cov))
    model = IllnessDeathModel(*specs, covariate_names=config.covariates)
    return model, tuple(weak)


def _build_grids(records, config: FitConfig) -> dict:
    if config.grids is not None:
        return dict(config.grids)
    ages = []
    for rec in records:
        ages.append(rec.last_healthy_age)
        ages.append(rec.last_alive_age)
        if rec.death_age is not None:
            ages.append(rec.death_age)
        proxy = _onset_proxy(rec)
        if proxy is not None:
            ages.append(proxy)
    grid = default_knot_grid(np.array(ages), n_interior=config.n_interior, order=config.order)
    return {key: grid for key in TRANSITION_KEYS}


def _floor_spline_thetas(model: IllnessDeathModel, rel: float = 1e-3) -> IllnessDeathModel:
    """Push spline coefficients off the squared-parameterization ridge.

    A theta coordinate at exactly zero has zero gradient forever (the
    intensity uses theta**2), so initial points must keep every coordinate
    slightly away from it; the sign carries no meaning.
    """
    specs = []
    for spec in model.specs:
        if spec.form == SPLINE:
            scale = float(np.max(np.abs(spec.theta), initial=0.0))
            floor = rel * (scale if scale > 0 else 1.0)
            theta = np.where(np.abs(spec.theta) < floor, floor, spec.theta)
            specs.append(spec.with_params(theta=theta))
        else:
            specs.append(spec)
    return IllnessDeathModel(*specs, covariate_names=model.covariate_names)


def _drop_missing_covariates(records, covariates):
    if not covariates:
        return list(records), 0
    kept, dropped = [], 0
    for rec in records:
        vals = [rec.covariates.get(name) for name in covariates]
        if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in vals):
            dropped += 1
        else:
            kept.append(rec)
    return kept, dropped


# -- Levenberg-Marquardt damped Newton loop --------------------------------------


class _ParamTransform:
    """Optimize weibull (shape, scale) blocks on the log scale.

    The raw parameterization has a curved, badly scaled ridge when the data
    window only pins down a local power law; log coordinates straighten it
    and make the gradient tolerance scale-free. At an interior optimum the
    chain rule maps the internal Hessian back exactly:
    ``cov_raw = J cov_internal J`` with ``J = diag(d raw / d internal)``.
    """

    def __init__(self, template: IllnessDeathModel):
        slices = template.param_slices()
        mask = np.zeros(slices["__len__"], dtype=bool)
        for spec, key in zip(template.specs, TRANSITION_KEYS):
            if spec.form == WEIBULL:
                mask[slices[f"theta{key}"]] = True
        self.log_mask = mask

    def to_internal(self, x_raw):
        y = np.array(x_raw, dtype=float)
        y[self.log_mask] = np.log(y[self.log_mask])
        return y

    def to_raw(self, y):
        x = np.array(y, dtype=float)
        x[self.log_mask] = np.exp(x[self.log_mask])
        return x

    def jacobian_diag(self, y):
        j = np.ones_like(y)
        j[self.log_mask] = np.exp(y[self.log_mask])
        return j


class _Tracer:
    def __init__(self, sink):
        self.sink = sink
        self._fh = open(sink, "w") if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__") else None

    def emit(self, record: dict):
        if self.sink is None:
            return
        if self._fh is not None:
            self._fh.write(json.dumps(record) + "\n")
        else:
            self.sink(record)

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _internal_fd_hessian(obj, transform, y, step=1e-6):
    """Central differences of the internal-coordinate analytic gradient."""
    y = np.asarray(y, dtype=float)
    cols = np.empty((y.size, y.size))
    for j in range(y.size):
        h = step * max(1.0, abs(y[j]))
        yp, ym = y.copy(), y.copy()
        yp[j] += h
        ym[j] -= h
        gp = obj.value_and_grad(transform.to_raw(yp))[1] * transform.jacobian_diag(yp)
        gm = obj.value_and_grad(transform.to_raw(ym))[1] * transform.jacobian_diag(ym)
        cols[j] = (gp - gm) / (2.0 * h)
    return (cols + cols.T) / 2.0


def _maximize(obj: PenalizedObjective, x0: np.ndarray, config: FitConfig,
              transform: _ParamTransform):
    """LM-damped Newton ascent in internal coordinates.

    Curvature starts as the per-subject gradient outer product plus the
    penalty Hessian and switches to an exact finite-differenced Hessian
    when progress slows; the Nielsen gain-ratio schedule drives the
    damping. Returns (y, f, grad_norm, iterations, mode).
    """
    y = transform.to_internal(np.asarray(x0, dtype=float))
    tracer = _Tracer(config.trace)

    def safe_value(yt):
        try:
            return obj.value(transform.to_raw(yt))
        except (LikelihoodNumericError, InvalidParameterRegion):
            return -np.inf

    def eval_grad(yt):
        f, g_raw, subj = obj.value_and_grad(transform.to_raw(yt))
        jdiag = transform.jacobian_diag(yt)
        return f, g_raw * jdiag, subj * jdiag[None, :]

    f, g, subj_grads = eval_grad(y)
    if not np.isfinite(f):
        raise NonConvergenceError("objective not finite at the initial point")
    mu = 1e-3
    nu = 2.0
    mode = "opg"
    stall = 0
    exact_curv = None
    iterations = 0
    try:
        for iterations in range(1, config.max_iter + 1):
            grad_norm = float(np.linalg.norm(g))
            tracer.emit({"iteration": iterations - 1, "logpl": f,
                         "gradient_norm": grad_norm, "damping": mu, "mode": mode})
            if grad_norm <= config.tol_grad and iterations > 1:
                break
            if mode == "opg":
                jdiag = transform.jacobian_diag(y)
                pen_h = jdiag[:, None] * obj.penalty_hessian(transform.to_raw(y)) * jdiag[None, :]
                curv = subj_grads.T @ subj_grads + pen_h
            else:
                if exact_curv is None:
                    exact_curv = -_internal_fd_hessian(obj, transform, y)
                curv = exact_curv
            dscale = np.clip(np.diag(curv), 1e-10, None)
            accepted = False
            for _ in range(70):
                try:
                    step = np.linalg.solve(curv + mu * np.diag(dscale), g)
                except np.linalg.LinAlgError:
                    mu *= 4.0
                    nu = 2.0
                    continue
                f_trial = safe_value(y + step)
                if f_trial > f:
                    accepted = True
                    break
                mu *= nu
                nu = min(2.0 * nu, 64.0)
                if mu > 1e15:
                    break
            if not accepted:
                if mode == "opg":
                    mode, mu, nu, exact_curv = "exact", 1e-3, 2.0, None
                    continue
                break  # damping exhausted: numerically at the optimum
            predicted = float(step @ (mu * dscale * step + g)) / 2.0
            rho = (f_trial - f) / predicted if predicted > 0 else 1.0
            delta_f = f_trial - f
            y = y + step
            f, g, subj_grads = eval_grad(y)
            exact_curv = None
            if rho > 0:
                mu = mu * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                mu = max(mu, 1e-12)
                nu = 2.0
            grad_norm = float(np.linalg.norm(g))
            if delta_f <= config.tol_logpl and grad_norm <= config.tol_grad:
                break
            if delta_f <= 10.0 * config.tol_logpl and grad_norm > config.tol_grad:
                stall += 1
                if stall >= 2 and mode == "opg":
                    mode, mu, nu = "exact", 1e-3, 2.0
                    stall = 0
            else:
                stall = 0
        grad_norm = float(np.linalg.norm(g))
        tracer.emit({"iteration": iterations, "logpl": f,
                     "gradient_norm": grad_norm, "damping": mu, "mode": mode})
    finally:
        tracer.close()
    if grad_norm > config.tol_grad:
        raise NonConvergenceError(
            f"no convergence after {iterations} iterations "
            f"(gradient norm {grad_norm:.3e} > {config.tol_grad:.1e})",
            last_params=transform.to_raw(y), gradient_norm=grad_norm,
            iterations=iterations,
        )
    return y, f, grad_norm, iterations, mode


def fit(records, config: FitConfig | None = None, **kwargs) -> FittedModel:
    """Maximize the penalized log-likelihood over spline/weibull and covariate
    parameters; returns the optimum with its covariance.

    Covariance is the inverse of the negative penalized-objective Hessian
    at the optimum; a pseudo-inverse fallback is flagged on the result.
    """
    if config is None:
        config = FitConfig(**kwargs)
    elif kwargs:
        raise TypeError("pass either a FitConfig or keyword options, not both")
    records = list(records)
    if not records:
        raise ConfigError("cannot fit on an empty record set")
    records, dropped = _drop_missing_covariates(records, config.covariates)
    if not records:
        raise ConfigError("all records lack the requested covariates")
    grids = _build_grids(records, config) if config.form == SPLINE else None
    if config.init_model is not None:
        template, weak = config.init_model, ()
    else:
        template, weak = _initial_model(records, config, grids)
    template = _floor_spline_thetas(template)
    obj = PenalizedObjective(records, template, kappas=config.weights.as_tuple(),
                             n_quad=config.n_quad,
                             censor_at_last_alive=config.censor_at_last_alive)
    transform = _ParamTransform(template)
    y, f, grad_norm, iterations, mode = _maximize(obj, template.pack(), config, transform)
    x = transform.to_raw(y)

    # covariance = inverse negative Hessian of the penalized objective,
    # computed in the well-scaled internal coordinates and mapped back
    neg_hess = -_internal_fd_hessian(obj, transform, y)
    pseudo = False
    try:
        cov_internal = np.linalg.inv(neg_hess)
        if not np.all(np.isfinite(cov_internal)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov_internal = np.linalg.pinv(neg_hess)
        pseudo = True
    jdiag = transform.jacobian_diag(y)
    covariance = jdiag[:, None] * cov_internal * jdiag[None, :]
    covariance = (covariance + covariance.T) / 2.0

    model = template.unpack(x)
    loglik = pairwise_sum(obj.loglik_vector(x))
    return FittedModel(
        model=model,
        weights=config.weights,
        logpl=f,
        loglik=float(loglik),
        covariance=covariance,
        convergence={
            "iterations": iterations,
            "gradient_norm": grad_norm,
            "status": "converged",
            "mode": mode,
            "n_records": len(records),
            "dropped_missing_covariates": dropped,
        },
        covariance_pseudo_inverse=pseudo,
        weakly_identified=weak,
    )


# -- smoothing selection -----------------------------------------------------------


def _lcv_score(records, fitted: FittedModel, config: FitConfig) -> float:
    """Approximate leave-one-out cross-validated likelihood:
    ``loglik - trace(H_pen^{-1} H_unpen)`` with H the negative Hessians of
    the penalized/unpenalized objectives at the optimum."""
    obj = PenalizedObjective(records, fitted.model, kappas=fitted.weights.as_tuple(),
                             n_quad=config.n_quad,
                             censor_at_last_alive=config.censor_at_last_alive)
    x = fitted.model.pack()
    h_pen = -obj.fd_hessian(x)
    h_unpen = h_pen - obj.penalty_hessian(x)
    try:
        edf = float(np.trace(np.linalg.solve(h_pen, h_unpen)))
    except np.linalg.LinAlgError:
        edf = float(np.trace(np.linalg.pinv(h_pen) @ h_unpen))
    return fitted.loglik - edf


@dataclass
class SmoothingSelection:
    weights: PenaltyWeights
    scores: dict
    sweeps: int


def select_smoothing(records, kappa_grid, config: FitConfig | None = None,
                     n_sweeps: int = 3, full_grid: bool = False,
                     full_result: bool = False):
    """Pick penalty weights maximizing the cross-validated likelihood score.

    Searches the grid coordinate-wise per transition (``n_sweeps`` passes,
    warm-starting each refit) or exhaustively with ``full_grid``. Ties
    break toward the largest kappa (prefer the smoother fit).
    """
    grid = sorted(float(k) for k in kappa_grid)
    if not grid:
        raise ConfigError("kappa grid is empty")
    if config is None:
        config = FitConfig()
    if config.form != SPLINE:
        raise ConfigError("smoothing selection applies to the spline form")
    records = list(records)

    scores: dict = {}
    failures: dict = {}

    def evaluate(kappas):
        # every candidate starts from the standard smooth initialization:
        # warm-starting across kappa decades hops between local optima of
        # the nonconvex squared-coefficient landscape
        key = tuple(kappas)
        if key in scores:
            return scores[key]
        cfg = FitConfig(**{**config.__dict__, "weights": PenaltyWeights(*kappas),
                           "trace": None})
        try:
            fitted = fit(records, cfg)
        except (NonConvergenceError, LikelihoodNumericError) as err:
            failures[key] = str(err)
            scores[key] = -np.inf
            return -np.inf
        scores[key] = _lcv_score(records, fitted, config)
        return scores[key]

    if full_grid:
        best, best_score = None, -np.inf
        for combo in itertools.product(grid, repeat=3):
            score = evaluate(combo)
            if score > best_score or (score == best_score and best is not None
                                      and combo >= best):
                best, best_score = combo, score
        sweeps_done = 1
    else:
        mid = grid[len(grid) // 2]
        best = (mid, mid, mid)
        best_score = evaluate(best)
        sweeps_done = 0
        for _ in range(n_sweeps):
            changed = False
            for axis in range(3):
                for kappa in grid:
                    cand = tuple(kappa if i == axis else best[i] for i in range(3))
                    score = evaluate(cand)
                    if score > best_score or (score == best_score and cand[axis] > best[axis]):
                        if cand != best:
                            changed = True
                        best, best_score = cand, score
            sweeps_done += 1
            if not changed:
                break
    if not np.isfinite(best_score):
        detail = "; ".join(f"kappa={k}: {msg}" for k, msg in failures.items())
        raise NonConvergenceError(f"every smoothing candidate failed to converge: {detail}")
    result = SmoothingSelection(PenaltyWeights(*best), scores, sweeps_done)
    return result if full_result else result.weights


# -- hazard ratios --------------------------------------------------------------


def hazard_ratios(fitted: FittedModel) -> pd.DataFrame:
    """Table of hazard ratios ``exp(beta)`` with 95% Wald intervals.

    One row per (transition, covariate); the interval columns are NaN with
    ``available=False`` when no covariance is attached.
    """
    slices = fitted.model.param_slices()
    rows = []
    for spec, key in zip(fitted.model.specs, TRANSITION_KEYS):
        base = slices[f"beta{key}"].start
        for j, name in enumerate(fitted.model.covariate_names):
            beta = float(spec.beta[j])
            if fitted.covariance is not None:
                se = math.sqrt(max(float(fitted.covariance[base + j, base + j]), 0.0))
                lo, hi = math.exp(beta - 1.96 * se), math.exp(beta + 1.96 * se)
                available = True
            else:
                se, lo, hi, available = math.nan, math.nan, math.nan, False
            rows.append({"transition": key, "covariate": name, "hr": math.exp(beta),
                         "lo95": lo, "hi95": hi, "se": se, "available": available})
    return pd.DataFrame(rows, columns=["transition", "covariate", "hr",
                                       "lo95", "hi95", "se", "available"])
