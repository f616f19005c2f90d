"""Independent reference implementations used as test oracles.

Everything here is deliberately written from first principles (direct
recursions, closed forms, brute-force quadrature) and never calls the
package's own evaluation paths.
"""

import math

import numpy as np


def bspline_ref(knots, order, i, t):
    """Normalized B-spline by the direct Cox-de Boor recursion."""
    knots = np.asarray(knots, dtype=float)
    if order == 1:
        # closed on the right at the final knot
        if knots[i] <= t < knots[i + 1]:
            return 1.0
        if t == knots[-1] and knots[i] < knots[i + 1] <= t:
            return 1.0
        return 0.0
    left = 0.0
    den = knots[i + order - 1] - knots[i]
    if den > 0:
        left = (t - knots[i]) / den * bspline_ref(knots, order - 1, i, t)
    right = 0.0
    den = knots[i + order] - knots[i + 1]
    if den > 0:
        right = (knots[i + order] - t) / den * bspline_ref(knots, order - 1, i + 1, t)
    return left + right


def mspline_ref(knots, order, i, t):
    """M-spline as order * B / support width."""
    width = knots[i + order] - knots[i]
    return order * bspline_ref(knots, order, i, t) / width


def gauss_legendre_integral(f, a, b, n=64, pieces=1):
    """Composite fixed-order Gauss-Legendre quadrature."""
    x, w = np.polynomial.legendre.leggauss(n)
    total = 0.0
    edges = np.linspace(a, b, pieces + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = (hi - lo) / 2.0
        total += half * np.sum(w * f(lo + half * (x + 1.0)))
    return total


# -- constant-hazard illness-death closed forms ------------------------------
# With onset rate a, healthy-death rate b, post-onset death rate c, all
# constant, every state-occupation quantity has an elementary form.


def p00_const(a, b, dt):
    return math.exp(-(a + b) * dt)


def p01_const(a, b, c, dt):
    if abs(a + b - c) < 1e-12:
        return a * dt * math.exp(-c * dt)
    return a / (a + b - c) * (math.exp(-c * dt) - math.exp(-(a + b) * dt))


def risk_const(a, b, dt):
    """Cumulative onset probability (death after onset keeps counting)."""
    return a / (a + b) * (1.0 - math.exp(-(a + b) * dt))


def prevalence_const(a, b, c, dt):
    p00 = p00_const(a, b, dt)
    p01 = p01_const(a, b, c, dt)
    return p01 / (p00 + p01)


def loglik_healthy_censored_const(a, b, entry, censor):
    return -(a + b) * (censor - entry)


def loglik_exact_onset_const(a, b, c, entry, onset, death):
    return (-(a + b) * (onset - entry) + math.log(a)
            - c * (death - onset) + math.log(c))


def loglik_dead_inconclusive_const(a, b, c, entry, last_healthy, death):
    """S00(e,L) [S00(L,D) b + c * int_L^D S00(L,u) a S11(u,D) du]."""
    head = -(a + b) * (last_healthy - entry)
    stay = math.exp(-(a + b) * (death - last_healthy)) * b
    moved = c * a * p01_const(a, b, c, death - last_healthy) / a if a > 0 else 0.0
    # p01_const already is int S00 a S11; reuse it directly:
    moved = c * p01_const(a, b, c, death - last_healthy)
    return head + math.log(stay + moved)
