"""Transition intensity specifications and their evaluation.

A :class:`HazardSpec` represents one transition intensity of the
illness-death process, either as a squared-coefficient M-spline expansion
or as a two-parameter Weibull, with proportional-hazards covariate
effects on top of the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import KnotGrid, eval_mspline_basis, ispline_design, mspline_design
from .exceptions import AgeDomainError, DimensionError, OrderingError

TRANSITIONS = ("0->1", "0->2", "1->2")

SPLINE = "spline"
WEIBULL = "weibull"


@dataclass(frozen=True)
class HazardSpec:
    """One transition intensity with proportional-hazards covariates.

    Parameters
    ----------
    transition : str
        One of ``"0->1"``, ``"0->2"``, ``"1->2"``.
    form : str
        ``"spline"``: baseline ``sum_i theta_i^2 M_i(t)`` on ``grid``
        (squaring keeps the intensity nonnegative without constraints).
        ``"weibull"``: baseline ``(shape/scale) (t/scale)^(shape-1)`` with
        ``theta = (shape, scale)``.
    theta : array
        Raw baseline parameters as above.
    beta : array
        Covariate log hazard ratios; ``exp(beta_j)`` is the hazard ratio
        for a one-unit covariate change.
    grid : KnotGrid, optional
        Required for the spline form.
    """

    transition: str
    form: str
    theta: np.ndarray
    beta: np.ndarray
    grid: KnotGrid | None = None

    def __post_init__(self):
        if self.transition not in TRANSITIONS:
            raise ValueError(f"unknown transition {self.transition!r}")
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if self.form == SPLINE:
            if self.grid is None:
                raise ValueError("spline form requires a KnotGrid")
            if self.theta.shape != (self.grid.n_basis,):
                raise DimensionError(
                    f"theta has length {self.theta.size}, grid has {self.grid.n_basis} basis functions"
                )
        elif self.form == WEIBULL:
            if self.theta.shape != (2,):
                raise DimensionError("weibull form takes theta = (shape, scale)")
            shape, scale = self.theta
            if not (shape > 0 and scale > 0):
                raise ValueError(f"weibull shape and scale must be positive, got {self.theta}")
        else:
            raise ValueError(f"unknown form {self.form!r}")

    @property
    def coefficients(self) -> np.ndarray:
        """Realized nonnegative spline coefficients ``theta_i^2``."""
        if self.form != SPLINE:
            raise ValueError("coefficients are defined for the spline form only")
        return self.theta**2

    def with_params(self, theta=None, beta=None) -> "HazardSpec":
        return HazardSpec(
            self.transition,
            self.form,
            self.theta if theta is None else theta,
            self.beta if beta is None else beta,
            self.grid,
        )

    def domain(self) -> tuple[float, float]:
        """Ages where the baseline is defined without extrapolation."""
        if self.form == SPLINE:
            return self.grid.boundary_lo, self.grid.boundary_hi
        return 0.0, np.inf


def _covariate_factor(spec: HazardSpec, z) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size == 0 and spec.beta.size == 0:
        return 1.0
    if z.shape != spec.beta.shape:
        raise DimensionError(
            f"covariate vector has length {z.size}, beta has length {spec.beta.size}"
        )
    return float(np.exp(spec.beta @ z))


def baseline_intensity(spec: HazardSpec, t, extrapolate: bool = False):
    """Baseline intensity at age(s) ``t`` (covariates at zero)."""
    pts = np.atleast_1d(np.asarray(t, dtype=float))
    if spec.form == SPLINE:
        lo, hi = spec.grid.boundary_lo, spec.grid.boundary_hi
        if not extrapolate and (np.any(pts < lo) or np.any(pts > hi)):
            spec.grid.check_domain(pts)
        vals = mspline_design(spec.grid, pts) @ spec.coefficients
    else:
        if np.any(pts <= 0):
            raise AgeDomainError(float(pts[pts <= 0][0]), 0.0, np.inf)
        shape, scale = spec.theta
        vals = (shape / scale) * (pts / scale) ** (shape - 1.0)
    return vals if np.ndim(t) else float(vals[0])


def baseline_cumulative(spec: HazardSpec, s, t, extrapolate: bool = False):
    """Baseline cumulative intensity over ``[s, t]`` (covariates at zero)."""
    a = np.atleast_1d(np.asarray(s, dtype=float))
    b = np.atleast_1d(np.asarray(t, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    if np.any(a > b):
        raise OrderingError(f"cumulative intensity needs s <= t, got s={s}, t={t}")
    if spec.form == SPLINE:
        lo, hi = spec.grid.boundary_lo, spec.grid.boundary_hi
        if not extrapolate and (np.any(a < lo) or np.any(b > hi)):
            spec.grid.check_domain(np.concatenate([a, b]))
        delta = ispline_design(spec.grid, b) - ispline_design(spec.grid, a)
        vals = delta @ spec.coefficients
    else:
        if np.any(a <= 0):
            raise AgeDomainError(float(a[a <= 0][0]), 0.0, np.inf)
        shape, scale = spec.theta
        vals = (b / scale) ** shape - (a / scale) ** shape
    scalar = np.ndim(s) == 0 and np.ndim(t) == 0
    return float(vals[0]) if scalar else vals


def intensity(spec: HazardSpec, t, z=(), extrapolate: bool = False):
    """Intensity ``alpha(t | z) = alpha_0(t) exp(beta . z)``.

    Raises :class:`AgeDomainError` outside the baseline domain unless
    ``extrapolate`` is set, in which case the spline baseline is held
    constant at its upper-boundary value.
    """
    return baseline_intensity(spec, t, extrapolate=extrapolate) * _covariate_factor(spec, z)


def cumulative_intensity(spec: HazardSpec, s, t, z=(), extrapolate: bool = False):
    """Cumulative intensity ``A(s, t | z) = int_s^t alpha(u | z) du``.

    Additive over abutting intervals and zero when ``s == t``.
    """
    return baseline_cumulative(spec, s, t, extrapolate=extrapolate) * _covariate_factor(spec, z)


def default_knot_grid(ages: np.ndarray, n_interior: int = 7, order: int = 4,
                      lower: float = 60.0, upper_quantile: float = 0.99) -> KnotGrid:
    """Data-driven default grid: equidistant interior knots from ``lower``
    to the ``upper_quantile`` age of the observed event/censoring ages.

    The lower boundary drops below ``lower`` if the data start earlier, so
    every observed age stays inside or above the grid.
    """
    ages = np.asarray(ages, dtype=float)
    if ages.size == 0:
        raise ValueError("cannot build a knot grid from no ages")
    lo = min(lower, float(np.min(ages)))
    hi = float(np.quantile(ages, upper_quantile))
    if hi <= lo + 1.0:
        hi = max(float(np.max(ages)), lo + 1.0)
    return KnotGrid.equidistant(lo, hi, n_interior=n_interior, order=order)


def spline_spec_from_intensity(transition: str, grid: KnotGrid, fn, n_beta: int = 0,
                               eval_points: int = 200) -> HazardSpec:
    """Least-squares projection of a positive intensity onto the squared basis.

    Used to seed spline coefficients from a parametric pre-fit.
    """
    ts = np.linspace(grid.boundary_lo, grid.boundary_hi, eval_points)
    design = np.vstack([eval_mspline_basis(grid, float(t)) for t in ts])
    target = np.asarray([fn(float(t)) for t in ts], dtype=float)
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    floor = max(1e-8, 1e-4 * float(np.max(np.abs(coef), initial=1e-8)))
    theta = np.sqrt(np.maximum(coef, floor))
    return HazardSpec(transition, SPLINE, theta, np.zeros(n_beta), grid)
