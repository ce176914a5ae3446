import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxsurf.canonical import (
    DEFAULT_RECT,
    RiemannParameter,
    catenoid_point,
    closed_form_catenoid_graph,
    make_catenoid,
    make_riemann,
    riemann_end_surface,
    riemann_real_pole,
    riemann_rhs,
)
from maxsurf.errors import BranchCollision, PreconditionError
from maxsurf.shiffman import level_curvature, shiffman_u
from maxsurf.weierstrass import fit_end_asymptotics, integrate_immersion, loop_integrals, polar_grid, rect_grid


def ring(w, r, scale, n=32):
    grid = polar_grid(9, n, r / 1.1, r * 1.1)  # ring 4 sits at radius r
    return integrate_immersion(w, grid, (1.0, np.zeros(3))).X[4]


@pytest.mark.parametrize("scale, radius, height", [(1.0, 0.75, math.log(2)), (2.0, 1.5, 2 * math.log(2))])
def test_catenoid_level_circles(scale, radius, height):
    X = ring(make_catenoid(scale), 2.0, scale)
    assert np.allclose(np.hypot(X[:, 0], X[:, 1]), radius, rtol=0, atol=1e-10)
    assert np.allclose(X[:, 2], height, rtol=0, atol=1e-10)


def test_catenoid_cone_point():
    assert np.allclose(catenoid_point(1.0, np.linspace(0, 6, 7)), 0.0, atol=0)


def test_catenoid_scale_precondition():
    with pytest.raises(PreconditionError):
        make_catenoid(0.0)
    with pytest.raises(PreconditionError):
        closed_form_catenoid_graph(1.0, 0.0, -1.0)


def test_catenoid_strip_chart():
    # in w = log z the Gauss map e^w satisfies dg/dw = z g'(z) = g
    w = make_catenoid()
    z = np.exp(np.array([0.3 + 1j, -0.2 - 2j]))
    g, dg, _ = w.gauss(z)
    assert np.allclose(z * dg, g, rtol=1e-15)


@given(st.floats(0.3, 3.5), st.floats(0, 2 * np.pi))
def test_catenoid_level_curvature(r, theta):
    if abs(r - 1) < 1e-3:
        return
    kappa = level_curvature(make_catenoid(), r * np.exp(1j * theta))
    assert kappa == pytest.approx(2 * r / abs(1 - r * r), rel=1e-12)
    if r > 1:
        assert kappa > 0


@given(st.complex_numbers(min_magnitude=0.3, max_magnitude=3.5))
def test_catenoid_shiffman_zero(z):
    if abs(abs(z) - 1) < 1e-6:
        return
    assert abs(shiffman_u(make_catenoid(), z)) <= 1e-14


def test_closed_form_graph_examples():
    assert closed_form_catenoid_graph(0.0, 0.0, 1.0) == 0.0
    assert closed_form_catenoid_graph(0.75, 0.0, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert closed_form_catenoid_graph(0.0, 1.5, 2.0) == pytest.approx(2 * math.log(2), abs=1e-15)


def test_closed_form_graph_matches_surface():
    r, t = 2.7, 0.9
    X = catenoid_point(r, t)
    assert closed_form_catenoid_graph(X[0], X[1]) == pytest.approx(X[2], abs=1e-14)


# -- Riemann examples ---------------------------------------------------------------


def test_riemann_initial_slope():
    p = RiemannParameter(1.5, 1.0, 1)
    assert p.slope0 == pytest.approx(math.sqrt(5), abs=1e-15)
    assert RiemannParameter(1.5, 1.0, -1).slope0 == pytest.approx(-math.sqrt(5))
    w = make_riemann(p)
    _, dg, _ = w.gauss(np.array([0j]))
    assert dg[0] == pytest.approx(2.2360680, abs=1e-7)


def test_riemann_parameter_preconditions():
    with pytest.raises(PreconditionError):
        RiemannParameter(1.5, 0.0)
    roots = np.roots([1, 2 * 1.5, 1])
    with pytest.raises(PreconditionError):
        RiemannParameter(1.5, complex(roots[0]))
    with pytest.raises(PreconditionError):
        RiemannParameter(1.5, 1.0, 0)
    with pytest.raises(PreconditionError):
        make_riemann(RiemannParameter(1.5), z0=5.0)


def test_riemann_satisfies_ode(riemann15):
    g, dg, d2g = riemann15.gauss(rect_grid(13, 17, *DEFAULT_RECT).nodes())
    assert np.max(np.abs(dg ** 2 - riemann_rhs(g, 1.5)) / np.abs(dg) ** 2) < 1e-12
    assert np.allclose(d2g, 0.5 * (3 * g * g + 4 * 1.5 * g + 1), rtol=1e-14)


def test_riemann_path_orders_agree():
    p = RiemannParameter(1.5, 1.0, 1)
    rng = np.random.default_rng(3)
    x0, x1, y0, y1 = DEFAULT_RECT
    z = rng.uniform(x0, x1, 40) + 1j * rng.uniform(y0, y1, 40)
    g1, _, _ = make_riemann(p, path_order="real-first").gauss(z)
    g2, _, _ = make_riemann(p, path_order="imag-first").gauss(z)
    assert np.max(np.abs(g1 - g2)) <= 1e-7


@pytest.mark.parametrize("r", [1.2, 1.5, 2.0])
def test_riemann_periods_vanish(r):
    w = make_riemann(RiemannParameter(r, 1.0, 1))
    I = loop_integrals(w, 0.4, center=0.1 + 0.2j, rtol=1e-10)
    assert np.max(np.abs(I.real)) <= 1e-7


def test_riemann_real_on_real_axis(riemann15):
    g, dg, _ = riemann15.gauss(np.linspace(-0.6, 0.6, 25) + 0j)
    assert np.max(np.abs(g.imag)) < 1e-14
    assert np.max(np.abs(dg.imag)) < 1e-14


def test_riemann_branch_collision():
    # along the negative real axis g decreases to the root g = 0
    w = make_riemann(RiemannParameter(1.5, 1.0, 1), rect=(-3.0, 0.6, -0.1, 0.1))
    with pytest.raises(BranchCollision):
        w.gauss(np.array([-3.0 + 0j]))


def test_riemann_real_pole_blowup():
    p = RiemannParameter(1.5, 1.0, 1)
    w_e = riemann_real_pole(p)
    assert 0.6 < w_e.real < 1.5
    g, _, _ = make_riemann(p, rect=(0, w_e.real, -0.1, 0.1)).gauss(np.array([w_e.real - 1e-3 + 0j]))
    # g ~ 4 / (z - w_e)^2 near the pole
    assert abs(g[0]) * 1e-6 == pytest.approx(4, rel=1e-2)


def test_riemann_end_is_planar():
    S, w_e = riemann_end_surface(RiemannParameter(1.5, 1.0, 1))
    fit = fit_end_asymptotics(S, 0j)
    assert fit.kind == "planar"
    assert abs(fit.beta) < 1e-6
    assert fit.t0 == pytest.approx(w_e.real, abs=1e-6)
