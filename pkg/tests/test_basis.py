"""M-spline/I-spline basis and penalty-matrix tests against direct oracles."""

import numpy as np
import pytest

from idmkit.basis import KnotGrid, eval_ispline_basis, eval_mspline_basis, penalty_matrix
from idmkit.exceptions import AgeDomainError, UnsupportedOrderError

from oracles import gauss_legendre_integral, mspline_ref


def test_order1_mspline_is_uniform_density():
    grid = KnotGrid(0.0, 10.0, (), order=1)
    assert eval_mspline_basis(grid, 5.0) == pytest.approx([0.1])


def test_order1_ispline_is_uniform_cdf():
    grid = KnotGrid(0.0, 10.0, (), order=1)
    assert eval_ispline_basis(grid, 4.0) == pytest.approx([0.4])


def test_order2_boundary_values_match_cox_de_boor():
    grid = KnotGrid(0.0, 1.0, (), order=2)
    # order-2 B-splines at 0 are (1, 0); M = 2 B / support width
    assert eval_mspline_basis(grid, 0.0) == pytest.approx([2.0, 0.0])


@pytest.mark.parametrize("order", [2, 3, 4])
def test_mspline_matches_reference_recursion(order):
    grid = KnotGrid(60.0, 100.0, (68.0, 75.0, 83.0, 91.0), order=order)
    knots = grid.knots
    rng = np.random.default_rng(order)
    for t in rng.uniform(60.0, 100.0, 25):
        ours = eval_mspline_basis(grid, float(t))
        ref = [mspline_ref(knots, order, i, float(t)) for i in range(grid.n_basis)]
        assert ours == pytest.approx(ref, abs=1e-12)


def test_partition_of_unity_of_underlying_bsplines():
    grid = KnotGrid.equidistant(60.0, 100.0, 7, 4)
    rng = np.random.default_rng(7)
    ts = rng.uniform(60.0, 100.0, 1000)
    design = eval_mspline_basis(grid, ts)
    # sum_i (support/order) M_i == sum_i B_i == 1
    sums = design @ (grid.support_widths / grid.order)
    assert np.abs(sums - 1.0).max() <= 1e-12


def test_mspline_nonnegative_everywhere():
    grid = KnotGrid.equidistant(60.0, 100.0, 5, 4)
    ts = np.linspace(60.0, 100.0, 500)
    assert np.all(eval_mspline_basis(grid, ts) >= -1e-14)


def test_ispline_endpoints_zero_and_one():
    grid = KnotGrid.equidistant(60.0, 100.0, 7, 4)
    assert eval_ispline_basis(grid, 60.0) == pytest.approx(np.zeros(grid.n_basis), abs=1e-14)
    assert eval_ispline_basis(grid, 100.0) == pytest.approx(np.ones(grid.n_basis), abs=1e-12)


def test_ispline_monotone_nondecreasing():
    grid = KnotGrid.equidistant(60.0, 100.0, 6, 4)
    rng = np.random.default_rng(11)
    for _ in range(50):
        s, t = np.sort(rng.uniform(60.0, 100.0, 2))
        assert np.all(eval_ispline_basis(grid, t) - eval_ispline_basis(grid, s) >= -1e-12)


def test_ispline_integrates_mspline():
    grid = KnotGrid(60.0, 100.0, (70.0, 80.0, 90.0), order=4)
    t = 87.3
    edges = [60.0, *(k for k in (70.0, 80.0, 90.0) if k < t), t]
    oracle = np.zeros(grid.n_basis)
    for i in range(grid.n_basis):
        for lo, hi in zip(edges[:-1], edges[1:]):
            oracle[i] += gauss_legendre_integral(
                lambda u, i=i: eval_mspline_basis(grid, u)[:, i], lo, hi, n=32)
    assert eval_ispline_basis(grid, t) == pytest.approx(oracle, abs=1e-12)


def test_domain_error_names_value():
    grid = KnotGrid(60.0, 100.0, (), order=4)
    with pytest.raises(AgeDomainError, match="105"):
        eval_mspline_basis(grid, 105.0)
    with pytest.raises(AgeDomainError):
        eval_ispline_basis(grid, 59.0)


def test_penalty_rejects_low_order():
    with pytest.raises(UnsupportedOrderError):
        penalty_matrix(KnotGrid(0.0, 1.0, (), order=2))


def test_penalty_symmetric_psd():
    pen = penalty_matrix(KnotGrid.equidistant(60.0, 100.0, 7, 4))
    assert np.allclose(pen, pen.T)
    assert np.linalg.eigvalsh(pen).min() >= -1e-10


def _linear_coefficients(grid, slope=2.0, intercept=1.0):
    # Greville abscissae give B-spline coefficients of a linear function;
    # rescale for the M-spline normalization
    knots = grid.knots
    order = grid.order
    grev = np.array([knots[i + 1:i + order].mean() for i in range(grid.n_basis)])
    b_coef = slope * grev + intercept
    return b_coef * grid.support_widths / order


def test_penalty_zero_on_linear_intensity():
    grid = KnotGrid.equidistant(60.0, 100.0, 5, 4)
    pen = penalty_matrix(grid)
    coef = _linear_coefficients(grid)
    assert float(coef @ pen @ coef) == pytest.approx(0.0, abs=1e-10)


def test_penalty_quadratic_form_matches_finite_differences():
    # central second differences are exact for cubics inside a span, and
    # the squared curvature is quadratic there, so Simpson per span with
    # differences taken just inside the edges nails the integral
    rng = np.random.default_rng(3)
    interior = (66.0, 74.0, 81.0, 92.0)
    grid = KnotGrid(60.0, 100.0, interior, order=4)
    pen = penalty_matrix(grid)
    coef = rng.uniform(0.1, 1.0, grid.n_basis)

    def curvature(x, step):
        pts = np.array([x - step, x, x + step])
        f = eval_mspline_basis(grid, pts) @ coef
        return (f[0] - 2.0 * f[1] + f[2]) / step**2

    integral = 0.0
    edges = [60.0, *interior, 100.0]
    for lo, hi in zip(edges[:-1], edges[1:]):
        span = hi - lo
        u1, u2 = lo + 0.3 * span, lo + 0.7 * span
        c1, c2 = curvature(u1, 1e-3 * span), curvature(u2, 1e-3 * span)
        slope = (c2 - c1) / (u2 - u1)
        line = lambda t: c1 + slope * (t - u1)
        g = [line(lo) ** 2, line((lo + hi) / 2.0) ** 2, line(hi) ** 2]
        integral += span / 6.0 * (g[0] + 4.0 * g[1] + g[2])
    assert float(coef @ pen @ coef) == pytest.approx(integral, rel=1e-4)


def test_interior_knot_validation():
    with pytest.raises(ValueError):
        KnotGrid(60.0, 100.0, (59.0,), order=4)
    with pytest.raises(ValueError):
        KnotGrid(60.0, 100.0, (80.0, 70.0), order=4)
    # nondecreasing ties below the order are allowed
    KnotGrid(60.0, 100.0, (80.0, 80.0), order=4)
