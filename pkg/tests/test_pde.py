import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxsurf.errors import GeometryError, NotConverged, PreconditionError, SpacelikeViolation
from maxsurf.pde import (
    Circle,
    Dirichlet,
    Discretization,
    Ellipse,
    Hole,
    PdeSolution,
    PlanarDomain,
    PlanarRobin,
    far_field_condition,
    fit_pde_end,
    harmonic_start,
    q_residual,
    relaxation_oracle,
)

OUTER = float(np.arcsinh(2.0) - np.arcsinh(1.0))


def annulus(h):
    return PlanarDomain((Hole(Circle((0.0, 0.0), 1.0), 0.0, "inner"),), 2.0, h, Dirichlet(OUTER), (0.0, 0.0))


def exact(x, y):
    return np.arcsinh(np.hypot(x, y)) - np.arcsinh(1.0)


def solution_with(disc, U):
    B = disc.boundary_values(U)
    return PdeSolution(disc, U, B, disc.far_field_coefficients(U), np.nan, [], 0, "test")


def deep_nodes(d):
    """Regular unknowns whose unknown neighbours are regular as well."""
    ok = d.regular.copy()
    for cols in d.nbr.values():
        inner = cols < d.n_u
        ok &= np.where(inner, d.regular[np.minimum(cols, d.n_u - 1)], False)
    return np.flatnonzero(ok)


@pytest.fixture(scope="module")
def disc02():
    return Discretization(annulus(0.02))


# -- boundary curves ----------------------------------------------------------------


def test_circle_geometry():
    c = Circle((1.0, 2.0), 0.5)
    assert c.implicit(1.0, 2.0) == -1.0 and c.implicit(1.5, 2.0) == 0.0
    assert c.crossing(1.0, 2.0, 1.0, 0.0) == pytest.approx(0.5)
    assert np.isnan(c.crossing(3.0, 2.0, 0.1, 0.0))
    assert c.distance(2.0, 2.0) == pytest.approx(0.5)
    assert np.allclose(c.implicit(*c.sample(16).T), 0, atol=1e-15)


def test_ellipse_geometry():
    e = Ellipse((4.0, 0.0), 2.0, 1.0, 0.3)
    assert np.allclose(e.implicit(*e.sample(64).T), 0, atol=1e-14)
    assert e.extent == 4.0 and e.min_curvature_radius == 0.5
    # distance oracle by dense sampling of the curve
    rng = np.random.default_rng(1)
    pts = rng.uniform(-3, 11, (50, 2))
    pts = pts[e.implicit(*pts.T) > 0]
    s = e.sample(200000)
    brute = np.min(np.hypot(pts[:, None, 0] - s[None, :, 0], pts[:, None, 1] - s[None, :, 1]), axis=1)
    assert np.allclose(e.distance(*pts.T), brute, atol=1e-6)
    with pytest.raises(GeometryError):
        e.distance(4.0, 0.0)


@given(st.floats(0, 2 * np.pi), st.floats(0.1, 3))
def test_ellipse_crossing_lands_on_curve(phi, length):
    e = Ellipse((0.0, 0.0), 2.0, 1.0, 0.7)
    dx, dy = length * np.cos(phi), length * np.sin(phi)
    s = e.crossing(0.0, 0.0, dx, dy)
    if np.isfinite(s):
        assert abs(e.implicit(s * dx, s * dy)) < 1e-12
    else:
        assert e.implicit(dx, dy) < 0


def test_geometry_errors():
    with pytest.raises(GeometryError):
        Circle((0, 0), 0.0)
    with pytest.raises(GeometryError):
        Ellipse((0, 0), 1.0, -1.0)
    c = Hole(Circle((0.0, 0.0), 1.0), 1.0, "a")
    with pytest.raises(GeometryError):
        PlanarDomain((c, Hole(Circle((1.5, 0.0), 1.0), -1.0, "b")), 20.0, 0.1)
    with pytest.raises(GeometryError):
        PlanarDomain((c, Hole(Circle((2.1, 0.0), 1.0), -1.0, "b")), 20.0, 0.1)
    with pytest.raises(GeometryError):
        PlanarDomain((c,), 1.2, 0.1, Dirichlet(0.0))
    with pytest.raises(GeometryError):
        PlanarDomain((c,), 8.0, 0.1, PlanarRobin())
    with pytest.raises(GeometryError):
        PlanarDomain((c,), 8.0, 0.0, Dirichlet(0.0))


def test_default_center():
    d = PlanarDomain((Hole(Circle((0.0, 0.0), 1.0), 1.0), Hole(Ellipse((4.0, 0.0), 2.0, 1.0), -1.0)), 40.0, 0.2)
    assert d.center == pytest.approx((2.5, 0.0))


# -- discretization -----------------------------------------------------------------


def test_discretization_structure(disc02):
    d = disc02
    r = np.hypot(d.xu, d.yu)
    assert np.all((r > 1) & (r < 2))
    assert np.allclose(np.hypot(d.bx, d.by)[d.bowner == 0], 1.0, atol=1e-12)
    assert np.allclose(np.hypot(d.bx, d.by)[d.bowner == -1], 2.0, atol=1e-12)
    P = d.stencil_pattern()
    assert (P != P.T).nnz == 0
    assert P.sum(axis=1).max() <= 9
    assert np.all(d.boundary_values()[d.bowner == -1] == OUTER)


def test_q_residual_constant_and_affine(disc02):
    d = disc02
    k = int(deep_nodes(d)[0])
    assert q_residual(solution_with(d, np.full(d.n_u, 0.2)), k) == 0.0
    U = 0.3 * d.xu - 0.4 * d.yu
    assert abs(q_residual(solution_with(d, U), k)) < 1e-10
    assert abs(q_residual(solution_with(d, U), (int(d.iu[k]), int(d.ju[k])))) < 1e-10
    with pytest.raises(PreconditionError):
        q_residual(solution_with(d, U), d.n_u)


def test_q_residual_on_exact_solution(disc02):
    d = disc02
    sol = solution_with(d, exact(d.xu, d.yu))
    R = np.array([q_residual(sol, int(k)) for k in deep_nodes(d)[::97]])
    assert np.max(np.abs(R)) < 5e-3


def test_q_residual_spacelike_violation(disc02):
    d = disc02
    U = 2.0 * d.xu
    k = int(deep_nodes(d)[0])
    with pytest.raises(SpacelikeViolation):
        q_residual(solution_with(d, U), k)


def test_residual_is_monotone(disc02):
    # raising the neighbours of a node raises its residual
    d = disc02
    U = exact(d.xu, d.yu)
    B = d.boundary_values(U)
    k = int(deep_nodes(d)[200])
    R0 = d.residual(U, B)[k]
    for dname, cols in d.nbr.items():
        V = U.copy()
        V[cols[k]] += 1e-6
        # the unused diagonal of the mixed-term split carries a zero weight
        assert d.residual(V, B)[k] >= R0
        if dname in "ewns":
            assert d.residual(V, B)[k] > R0


# -- solvers ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def oracle_runs():
    return {h: relaxation_oracle(annulus(h)) for h in (0.04, 0.02)}


def test_oracle_reproduces_annulus(oracle_runs):
    errs = {}
    for h, sol in oracle_runs.items():
        errs[h] = float(np.max(np.abs(sol.U - exact(sol.disc.xu, sol.disc.yu))))
        assert np.min(sol.deficit) > 0
        assert sol.residual <= 1e-9
        assert sol.method == "relaxation"
    assert errs[0.02] <= 1e-3
    assert errs[0.04] / errs[0.02] >= 3


def test_oracle_on_constant_data():
    d = PlanarDomain((Hole(Circle((0.0, 0.0), 1.0), 0.3),), 2.0, 0.05, Dirichlet(0.3), (0.0, 0.0))
    sol = relaxation_oracle(d)
    assert np.allclose(sol.U, 0.3, rtol=0, atol=1e-12)


def test_oracle_not_converged():
    with pytest.raises(NotConverged):
        relaxation_oracle(annulus(0.04), max_iter=1)


def test_harmonic_start_annulus():
    d = Discretization(annulus(0.04))
    U = harmonic_start(d)
    r = np.hypot(d.xu, d.yu)
    assert np.max(np.abs(U - OUTER * np.log(r) / np.log(2))) < 2e-3


def test_planar_end_single_hole():
    # a single hole with constant data has the flat solution; its end height is that constant
    d = PlanarDomain((Hole(Circle((0.0, 0.0), 1.0), 0.7),), 10.0, 0.2)
    sol = relaxation_oracle(d)
    assert np.allclose(sol.U, 0.7, atol=1e-10)
    assert sol.t0 == pytest.approx(0.7, abs=1e-10)
    t0, beta, rms = fit_pde_end(sol)
    assert t0 == pytest.approx(0.7, abs=1e-9) and abs(beta) < 1e-9 and rms < 1e-9
    ff = far_field_condition(sol.disc, sol.U)
    assert ff["mode"] == "PlanarRobin" and ff["t0"] == pytest.approx(0.7, abs=1e-10)
    assert np.allclose(ff["outer_values"], 0.7, atol=1e-10)


def test_far_field_condition_dirichlet(disc02):
    ff = far_field_condition(disc02, np.zeros(disc02.n_u))
    assert ff["mode"] == "Dirichlet" and ff["t0"] is None
    assert np.all(ff["outer_values"] == OUTER)
