"""Composite Gauss-Legendre quadrature over explicit panel breakpoints."""

from __future__ import annotations

import numpy as np

_RULE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre_rule(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    if n_nodes not in _RULE_CACHE:
        _RULE_CACHE[n_nodes] = np.polynomial.legendre.leggauss(n_nodes)
    return _RULE_CACHE[n_nodes]


def panel_nodes(breakpoints: np.ndarray, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Map an n-point rule onto every panel between consecutive breakpoints.

    Parameters
    ----------
    breakpoints : array, shape (m,)
        Strictly increasing panel edges. Zero-width panels are dropped.
    n_nodes : int
        Gauss-Legendre nodes per panel.

    Returns
    -------
    nodes, weights : arrays, shape (n_panels * n_nodes,)
        Evaluation points and weights such that ``sum(w * f(nodes))``
        approximates the integral of f over the full breakpoint range.
    """
    bp = np.asarray(breakpoints, dtype=float)
    lo = bp[:-1]
    width = np.diff(bp)
    keep = width > 0
    lo, width = lo[keep], width[keep]
    if lo.size == 0:
        return np.empty(0), np.empty(0)
    x, w = gauss_legendre_rule(n_nodes)
    half = width / 2.0
    nodes = (lo + half)[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def integrate(f, a: float, b: float, breakpoints=(), n_nodes: int = 30) -> float:
    """Integrate a vectorized callable over [a, b] with panels at breakpoints."""
    if b <= a:
        return 0.0
    inner = [p for p in breakpoints if a < p < b]
    edges = np.array([a, *sorted(inner), b])
    nodes, weights = panel_nodes(edges, n_nodes)
    return float(np.dot(weights, f(nodes)))
