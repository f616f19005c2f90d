"""M-spline and I-spline bases on a clamped knot grid, plus curvature penalties.

M-splines are B-splines rescaled to integrate to one over their support,
which makes them a natural nonnegative basis for transition intensities;
I-splines are their running integrals and represent cumulative intensities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .exceptions import AgeDomainError, UnsupportedOrderError
from .quadrature import panel_nodes


@dataclass(frozen=True)
class KnotGrid:
    """Clamped knot sequence for a spline basis on an age range.

    Parameters
    ----------
    boundary_lo, boundary_hi : float
        Domain endpoints in years. Boundary knots carry multiplicity
        equal to ``order``.
    interior : tuple of float
        Nondecreasing interior knot ages, strictly inside the boundaries.
    order : int
        Spline order (polynomial degree + 1); cubic splines are order 4.
    """

    boundary_lo: float
    boundary_hi: float
    interior: tuple[float, ...] = ()
    order: int = 4
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "interior", tuple(float(k) for k in self.interior))
        if self.order < 1:
            raise ValueError(f"spline order must be >= 1, got {self.order}")
        if not self.boundary_lo < self.boundary_hi:
            raise ValueError("boundary_lo must be < boundary_hi")
        ks = self.interior
        if ks:
            if any(b < a for a, b in zip(ks, ks[1:])):
                raise ValueError("interior knots must be nondecreasing")
            if not (self.boundary_lo < ks[0] and ks[-1] < self.boundary_hi):
                raise ValueError("interior knots must lie strictly inside the boundaries")
            mult = max(ks.count(k) for k in set(ks))
            if mult >= self.order:
                raise ValueError("interior knot multiplicity must be below the spline order")

    @classmethod
    def equidistant(cls, boundary_lo, boundary_hi, n_interior=7, order=4):
        """Grid with ``n_interior`` equally spaced interior knots."""
        interior = np.linspace(boundary_lo, boundary_hi, n_interior + 2)[1:-1]
        return cls(float(boundary_lo), float(boundary_hi), tuple(interior), order)

    @property
    def knots(self) -> np.ndarray:
        """Full clamped knot vector (boundaries repeated ``order`` times)."""
        return np.array(
            [self.boundary_lo] * self.order
            + list(self.interior)
            + [self.boundary_hi] * self.order
        )

    @property
    def n_basis(self) -> int:
        return len(self.interior) + self.order

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot ages, panel edges for span-aligned quadrature."""
        return np.unique(self.knots)

    @property
    def support_widths(self) -> np.ndarray:
        """Support width ``knot[i+order] - knot[i]`` of each basis function."""
        k = self.knots
        return k[self.order :] - k[: -self.order]

    def _bspline(self) -> BSpline:
        if "bspl" not in self._cache:
            self._cache["bspl"] = BSpline(
                self.knots, np.eye(self.n_basis), self.order - 1, extrapolate=True
            )
        return self._cache["bspl"]

    def _bspline_antiderivative(self) -> BSpline:
        if "anti" not in self._cache:
            self._cache["anti"] = self._bspline().antiderivative()
        return self._cache["anti"]

    def check_domain(self, t) -> None:
        t = np.asarray(t, dtype=float)
        bad = (t < self.boundary_lo) | (t > self.boundary_hi)
        if np.any(bad):
            value = float(np.atleast_1d(t[bad])[0])
            raise AgeDomainError(value, self.boundary_lo, self.boundary_hi)


def _as_points(t):
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    return arr, np.ndim(t) == 0


def eval_mspline_basis(grid: KnotGrid, t) -> np.ndarray:
    """Evaluate every M-spline basis function at age(s) ``t``.

    Each basis function is ``order * B_i(t) / (knot[i+order] - knot[i])``
    with B_i the conventional normalized B-spline, hence nonnegative and
    integrating to one over its support.

    Returns shape ``(n_basis,)`` for scalar input, else ``(len(t), n_basis)``.
    """
    pts, scalar = _as_points(t)
    grid.check_domain(pts)
    scale = grid.order / grid.support_widths
    out = grid._bspline()(pts) * scale[None, :]
    return out[0] if scalar else out


def eval_ispline_basis(grid: KnotGrid, t) -> np.ndarray:
    """Evaluate the integrated basis ``I_i(t) = int_lo^t M_i(u) du``.

    Each I_i is nondecreasing with I_i(boundary_lo) = 0 and
    I_i(boundary_hi) = 1.
    """
    pts, scalar = _as_points(t)
    grid.check_domain(pts)
    anti = grid._bspline_antiderivative()
    raw = anti(pts) - anti(np.array([grid.boundary_lo]))
    scale = grid.order / grid.support_widths
    out = raw * scale[None, :]
    return out[0] if scalar else out


def mspline_design(grid: KnotGrid, t: np.ndarray) -> np.ndarray:
    """M-spline design matrix with a constant-intensity tail above boundary_hi.

    Ages above ``boundary_hi`` reuse the boundary row, which extends the
    intensity as a constant; below ``boundary_lo`` stays a domain error.
    """
    pts = np.asarray(t, dtype=float)
    if np.any(pts < grid.boundary_lo):
        grid.check_domain(pts)
    clamped = np.minimum(pts, grid.boundary_hi)
    scale = grid.order / grid.support_widths
    return grid._bspline()(clamped) * scale[None, :]


def ispline_design(grid: KnotGrid, t: np.ndarray) -> np.ndarray:
    """I-spline design matrix consistent with the constant-tail extension.

    Above ``boundary_hi`` each column grows linearly at the boundary
    M-spline value, so coefficient dot products remain valid cumulative
    intensities of the extrapolated hazard.
    """
    pts = np.asarray(t, dtype=float)
    if np.any(pts < grid.boundary_lo):
        grid.check_domain(pts)
    clamped = np.minimum(pts, grid.boundary_hi)
    anti = grid._bspline_antiderivative()
    raw = anti(clamped) - anti(np.array([grid.boundary_lo]))
    scale = grid.order / grid.support_widths
    out = raw * scale[None, :]
    over = pts - clamped
    if np.any(over > 0):
        tail = eval_mspline_basis(grid, grid.boundary_hi)
        out = out + over[:, None] * tail[None, :]
    return out


def penalty_matrix(grid: KnotGrid) -> np.ndarray:
    """Curvature penalty Gram matrix ``P_ij = int M_i''(u) M_j''(u) du``.

    The quadratic form ``c' P c`` equals the integrated squared second
    derivative of the intensity ``sum_i c_i M_i``. The integrand is
    piecewise polynomial, so span-aligned Gauss-Legendre integrates it
    exactly (up to roundoff).
    """
    if grid.order < 3:
        raise UnsupportedOrderError(
            f"penalty needs order >= 3 for a second derivative, got order {grid.order}"
        )
    d2 = grid._bspline().derivative(2)
    nodes, weights = panel_nodes(grid.breakpoints, n_nodes=max(grid.order, 6))
    design = d2(nodes) * (grid.order / grid.support_widths)[None, :]
    pen = design.T @ (weights[:, None] * design)
    return (pen + pen.T) / 2.0
