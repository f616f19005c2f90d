"""Exact log-likelihood contributions under interval censoring and left truncation.

Each subject contributes the probability of the observed data conditional
on being alive and disease-free at the entry age, built from the state-0
survival ``S00(s,t) = exp(-A01(s,t) - A02(s,t))`` and the post-onset
survival ``S11(s,t) = exp(-A12(s,t))``. Onset windows that were never
resolved (interval-censored diagnoses and inconclusive deaths) integrate
the latent onset age over the window.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import LikelihoodNumericError, OrderingError
from .hazards import SPLINE, baseline_cumulative, baseline_intensity
from .model import IllnessDeathModel
from .quadrature import panel_nodes
from .records import ObservationPattern, SubjectRecord, classify_pattern

DEFAULT_QUAD_NODES = 30


def integration_panels(model: IllnessDeathModel, a: float, b: float) -> np.ndarray:
    """Panel edges for integrating over (a, b]: knot spans of every spline
    transition plus the extrapolation boundary, clipped to the range."""
    edges = {a, b}
    for spec in model.specs:
        if spec.form == SPLINE:
            for k in spec.grid.breakpoints:
                if a < k < b:
                    edges.add(float(k))
            hi = spec.grid.boundary_hi
            if a < hi < b:
                edges.add(float(hi))
    return np.array(sorted(edges))


def _survival_exponent(model, s, t, z):
    """-log S00(s,t|z), vectorized over broadcastable s, t."""
    a01 = baseline_cumulative(model.h01, s, t, extrapolate=True)
    a02 = baseline_cumulative(model.h02, s, t, extrapolate=True)
    e1 = math.exp(float(model.h01.beta @ z)) if model.h01.beta.size else 1.0
    e2 = math.exp(float(model.h02.beta @ z)) if model.h02.beta.size else 1.0
    return a01 * e1 + a02 * e2


def _onset_window_integral(model, lo, hi, target, z, n_quad, include_post_onset=True):
    """``int_lo^hi S00(lo,u) a01(u) S11(u,target) du`` with covariates z."""
    if hi < lo:
        raise OrderingError(f"onset window ({lo}, {hi}] is reversed")
    if hi == lo:
        return 0.0
    edges = integration_panels(model, lo, hi)
    nodes, weights = panel_nodes(edges, n_quad)
    e1 = math.exp(float(model.h01.beta @ z)) if model.h01.beta.size else 1.0
    e3 = math.exp(float(model.h12.beta @ z)) if model.h12.beta.size else 1.0
    s00 = np.exp(-_survival_exponent(model, lo, nodes, z))
    a01 = baseline_intensity(model.h01, nodes, extrapolate=True) * e1
    if include_post_onset:
        a12 = baseline_cumulative(model.h12, nodes, np.full_like(nodes, target),
                                  extrapolate=True) * e3
        s11 = np.exp(-a12)
    else:
        s11 = 1.0
    return float(np.dot(weights, s00 * a01 * s11))


def log_likelihood_contribution(rec: SubjectRecord, model: IllnessDeathModel,
                                n_quad: int = DEFAULT_QUAD_NODES,
                                censor_at_last_alive: bool = False) -> float:
    """Log of one subject's likelihood contribution.

    Patterns and their contributions (e = entry age, L = last healthy age,
    D = death age, C = censoring age):

    * healthy-censored: ``S00(e, L)``; with ``censor_at_last_alive`` the
      observation extends to C = last_alive_age and adds the unobserved
      onset term ``S00(e,L) [S00(L,C) + int_L^C S00(L,u) a01(u) S11(u,C) du]``.
    * healthy-then-dead-conclusive: ``S00(e, D) a02(D)``.
    * dead-inconclusive: ``S00(e,L) [S00(L,D) a02(D) +
      a12(D) int_L^D S00(L,u) a01(u) S11(u,D) du]`` — the correction for
      disease information missing due to death.
    * interval-censored onset in (L, R], terminal T:
      ``S00(e,L) int_L^R S00(L,u) a01(u) S11(u,T) du [a12(D) if dead]``.
    * exact onset x, terminal T: ``S00(e,x) a01(x) S11(x,T) [a12(D) if dead]``.
    """
    z = model.z_vector(rec.covariates)
    e = rec.entry_age
    pattern = classify_pattern(rec)
    e2 = math.exp(float(model.h02.beta @ z)) if model.h02.beta.size else 1.0
    e3 = math.exp(float(model.h12.beta @ z)) if model.h12.beta.size else 1.0

    def _log(value, what):
        if not np.isfinite(value) or value <= 0.0:
            raise LikelihoodNumericError(rec.id, f"{what} = {value!r}")
        return math.log(value)

    try:
        if pattern is ObservationPattern.HEALTHY_CENSORED:
            ll = -_survival_exponent(model, e, rec.last_healthy_age, z)
            if censor_at_last_alive and rec.last_alive_age > rec.last_healthy_age:
                lo, cens = rec.last_healthy_age, rec.last_alive_age
                stayed = math.exp(-_survival_exponent(model, lo, cens, z))
                hidden = _onset_window_integral(model, lo, cens, cens, z, n_quad)
                ll += _log(stayed + hidden, "censored bracket")
        elif pattern is ObservationPattern.HEALTHY_THEN_DEAD_CONCLUSIVE:
            d = rec.death_age
            ll = -_survival_exponent(model, e, d, z)
            ll += _log(baseline_intensity(model.h02, d, extrapolate=True) * e2, "a02 at death")
        elif pattern is ObservationPattern.DEAD_INCONCLUSIVE:
            lo, d = rec.last_healthy_age, rec.death_age
            ll = -_survival_exponent(model, e, lo, z)
            stayed = math.exp(-_survival_exponent(model, lo, d, z))
            stayed *= baseline_intensity(model.h02, d, extrapolate=True) * e2
            moved = _onset_window_integral(model, lo, d, d, z, n_quad)
            moved *= baseline_intensity(model.h12, d, extrapolate=True) * e3
            ll += _log(stayed + moved, "inconclusive-death bracket")
        elif pattern in (ObservationPattern.ILL_CENSORED, ObservationPattern.ILL_THEN_DEAD):
            terminal = rec.terminal_age
            if rec.onset_exact is not None:
                x = rec.onset_exact
                ll = -_survival_exponent(model, e, x, z)
                e1 = math.exp(float(model.h01.beta @ z)) if model.h01.beta.size else 1.0
                ll += _log(baseline_intensity(model.h01, x, extrapolate=True) * e1,
                           "a01 at onset")
                ll += -baseline_cumulative(model.h12, x, terminal, extrapolate=True) * e3
            else:
                lo, hi = rec.onset_interval
                ll = -_survival_exponent(model, e, lo, z)
                ll += _log(_onset_window_integral(model, lo, hi, terminal, z, n_quad),
                           "onset-window integral")
            if rec.dead:
                ll += _log(baseline_intensity(model.h12, rec.death_age, extrapolate=True) * e3,
                           "a12 at death")
        else:  # pragma: no cover - enum is exhaustive
            raise AssertionError(pattern)
    except LikelihoodNumericError:
        raise
    except (OverflowError, FloatingPointError) as err:
        raise LikelihoodNumericError(rec.id, str(err)) from err
    if not np.isfinite(ll):
        raise LikelihoodNumericError(rec.id, f"log contribution = {ll!r}")
    return float(ll)


def pairwise_sum(values: np.ndarray) -> float:
    """Deterministic pairwise-tree reduction of a 1-D array."""
    vals = np.asarray(values, dtype=float)
    n = vals.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        vals = np.concatenate([vals[:half] + vals[half : 2 * half], vals[2 * half : n]])
        n = vals.size
    return float(vals[0])


def total_log_likelihood(records, model: IllnessDeathModel,
                         n_quad: int = DEFAULT_QUAD_NODES,
                         censor_at_last_alive: bool = False,
                         n_partitions: int = 1) -> float:
    """Sum of per-subject contributions, order-independent by construction.

    With ``n_partitions > 1`` the records are split into contiguous chunks
    whose partial pairwise sums are themselves pairwise-combined, matching
    the layout a parallel evaluation would use.
    """
    contribs = np.array([
        log_likelihood_contribution(rec, model, n_quad=n_quad,
                                    censor_at_last_alive=censor_at_last_alive)
        for rec in records
    ])
    if n_partitions <= 1 or contribs.size == 0:
        return pairwise_sum(contribs)
    chunks = np.array_split(contribs, n_partitions)
    partials = np.array([pairwise_sum(c) for c in chunks])
    return pairwise_sum(partials)
