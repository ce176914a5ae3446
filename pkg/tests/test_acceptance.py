"""Acceptance criteria; the terminal summary prints one PASS/FAIL line per criterion."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from maxsurf.canonical import DEFAULT_RECT, RiemannParameter, catenoid_point, make_catenoid, make_riemann
from maxsurf.cli import main
from maxsurf.levels import classify_curve, make_curve, slab_scan
from maxsurf.lorentz import INFINITY, lorentz_inner, stereographic, stereographic_array
from maxsurf.pde import Circle, Dirichlet, Hole, PlanarDomain, relaxation_oracle
from maxsurf.perron import PerronSchedule, build_sub_super, is_subsolution, perron_solve, pointwise_max
from maxsurf.shiffman import harmonic_h_residual, jacobi_residual, level_curvature, shiffman_field, shiffman_u
from maxsurf.weierstrass import (
    AnnulusDomain,
    WeierstrassData,
    gauss_curvature,
    integrate_immersion,
    metric_factor,
    mirror_base,
    mirror_reflect,
    period_check,
    polar_grid,
    rect_grid,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RIEMANN_R = (1.2, 1.5, 2.0)


def criterion(number, title):
    return pytest.mark.criterion(number, title)


def run_cli(*argv):
    return main([str(a) for a in argv])


# -- 1 ------------------------------------------------------------------------------


@criterion(1, "stereographic projection lands on the hyperboloid")
def test_stereographic(measured):
    rng = np.random.default_rng(20261014)
    t0 = time.perf_counter()
    # moduli away from the unit circle, where sigma itself blows up
    mod = np.concatenate([rng.uniform(0.0, 0.9, 5000), rng.uniform(1.1, 10.0, 5000)])
    z = mod * np.exp(2j * np.pi * rng.uniform(size=mod.size))
    S = stereographic_array(z)
    q = S[:, 0] ** 2 + S[:, 1] ** 2 - S[:, 2] ** 2
    inf = stereographic(INFINITY).p
    elapsed = time.perf_counter() - t0
    measured.update(max_dev=float(np.max(np.abs(q + 1))), seconds=elapsed)
    assert np.max(np.abs(q + 1)) <= 1e-12
    assert np.max(np.abs(lorentz_inner(S, S) + 1)) <= 1e-12
    assert (inf.x1, inf.x2, inf.x3) == (0.0, 0.0, 1.0)
    assert elapsed < 1.0


# -- 2 ------------------------------------------------------------------------------


@criterion(2, "catenoid integration matches the closed form")
def test_catenoid_closed_form(measured):
    w = make_catenoid(1.0, R=4.0)
    t0 = time.perf_counter()
    S = integrate_immersion(w, polar_grid(128, 256, 0.25, 4.0), (1.0, np.zeros(3)))
    err = float(np.max(np.abs(S.X - catenoid_point(np.abs(S.z), np.angle(S.z)))))
    periods = max(max(abs(v) for v in period_check(w, rho)) for rho in (0.5, 1.5, 3.0))
    elapsed = time.perf_counter() - t0
    measured.update(sup_error=err, period=periods, seconds=elapsed)
    assert err <= 1e-9
    assert periods <= 1e-10
    assert elapsed < 10


# -- 3 ------------------------------------------------------------------------------


def fd_intrinsic_curvature(w, z, h=1e-3):
    offs = [0, h, -h, 1j * h, -1j * h]
    L = np.log(metric_factor(w, np.add.outer(z, offs)))
    lap = (L[..., 1] + L[..., 2] + L[..., 3] + L[..., 4] - 4 * L[..., 0]) / h ** 2
    return -lap / np.exp(2 * L[..., 0])


@criterion(3, "level and Gauss curvature oracles")
def test_curvature_oracles(measured):
    w = make_catenoid(1.0, R=4.0)
    kappa = level_curvature(w, 2.0)
    r = np.linspace(1.5, 3.0, 31)
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    z = (r[:, None] * np.exp(1j * th)).ravel()
    rel = float(np.max(np.abs(fd_intrinsic_curvature(w, z) / gauss_curvature(w, z) - 1)))
    measured.update(kappa_error=abs(kappa - 4 / 3), K_rel=rel)
    assert abs(kappa - 4 / 3) <= 1e-9
    assert rel < 0.02


# -- 4 ------------------------------------------------------------------------------


def riemann_grid(h=2e-3):
    x0, x1, y0, y1 = DEFAULT_RECT
    return rect_grid(int(round((x1 - x0) / h)) + 1, int(round((y1 - y0) / h)) + 1, x0, x1, y0, y1)


@criterion(4, "Shiffman function vanishes on circle-foliated examples")
def test_shiffman_vanishing(measured):
    t0 = time.perf_counter()
    cat = shiffman_field(make_catenoid(1.0, R=4.0), polar_grid(128, 256, 0.25, 4.0))
    measured["cat_u"] = cat.max_abs_u
    measured["cat_s"] = time.perf_counter() - t0
    ok = cat.max_abs_u <= 1e-12 and measured["cat_s"] < 30
    grid = riemann_grid()
    for r in RIEMANN_R:
        t0 = time.perf_counter()
        w = make_riemann(RiemannParameter(r, 1.0, 1))
        f = shiffman_field(w, grid)
        J, H = jacobi_residual(f), harmonic_h_residual(w, grid)
        dt = time.perf_counter() - t0
        measured.update({f"u{r}": f.max_abs_u, f"J{r}": J, f"H{r}": H, f"s{r}": dt})
        ok &= f.max_abs_u <= 1e-5 and J <= 1e-3 and H <= 1e-3 and dt < 30
    assert ok


# -- 5 ------------------------------------------------------------------------------


@criterion(5, "analytic Shiffman function matches its definition")
def test_shiffman_definition(measured):
    # g h = 1/z keeps the levels on the circles |z| = r
    w = WeierstrassData.closed_form(
        g=lambda z: z * np.exp(0.1 * z),
        dg=lambda z: (1 + 0.1 * z) * np.exp(0.1 * z),
        d2g=lambda z: 0.1 * (2 + 0.1 * z) * np.exp(0.1 * z),
        h=lambda z: np.exp(-0.1 * z) / z ** 2,
        domain=AnnulusDomain(4.0),
    )
    r = np.linspace(1.5, 2.5, 41)
    th = np.linspace(0, 2 * np.pi, 128, endpoint=False)
    z = (r[:, None] * np.exp(1j * th)).ravel()
    d = 1e-4
    rot = np.exp(1j * d)
    dk = (level_curvature(w, z * rot) - level_curvature(w, z / rot)) / (2 * d)
    u = shiffman_u(w, z)
    err = float(np.max(np.abs(u - np.abs(z) * metric_factor(w, z) * dk)))
    measured.update(sup_error=err, max_u=float(np.max(np.abs(u))))
    assert np.max(np.abs(u)) > 1e-2
    assert err <= 1e-4


# -- 6 ------------------------------------------------------------------------------


def mirror_defect(w, P0):
    grid = polar_grid(64, 128, 0.5, 2.0)
    base = (1.0, np.asarray(P0, float))
    X = integrate_immersion(w, grid, base).X
    Xs = integrate_immersion(mirror_reflect(w), grid, mirror_base(base, P0)).X
    return float(np.max(np.abs(Xs + X[::-1] - 2 * np.asarray(P0))))


@criterion(6, "mirror reflection through the cone point")
def test_mirror(measured):
    cone = WeierstrassData.closed_form(
        g=lambda z: z * np.exp(0.2 * (z - 1 / z)),
        dg=lambda z: (1 + 0.2 * (z + 1 / z)) * np.exp(0.2 * (z - 1 / z)),
        h=lambda z: (1 + 0.1 * z) / z ** 2,
        domain=AnnulusDomain(4.0),
    )
    d_cat = mirror_defect(make_catenoid(1.0, R=4.0), (0.0, 0.0, 0.0))
    d_gen = mirror_defect(cone, (0.3, -0.2, 0.5))
    measured.update(catenoid=d_cat, general=d_gen)
    assert d_cat <= 1e-9 and d_gen <= 1e-9


# -- 7 ------------------------------------------------------------------------------


def cone_spread(n_r):
    S = integrate_immersion(make_catenoid(1.0, R=4.0), polar_grid(n_r, 256, 0.25, 4.0), (1.0, np.zeros(3)))
    (_, v), = slab_scan(S, [0.0]).entries
    assert v.kind == "ConePoint"
    return v.spread


@criterion(7, "level classification")
def test_level_classification(measured, catenoid_surface):
    kinds = slab_scan(catenoid_surface, np.linspace(-0.9, 0.9, 19)).kinds()
    cat_ok = kinds == ["Circle"] * 9 + ["ConePoint"] + ["Circle"] * 9
    worst = 0.0
    riemann_ok = True
    for r in RIEMANN_R:
        S = integrate_immersion(make_riemann(RiemannParameter(r, 1.0, 1)), rect_grid(61, 161, *DEFAULT_RECT),
                                (0j, np.zeros(3)))
        rep = slab_scan(S, (-0.8, -0.5, -0.2, 0.2, 0.5, 0.8))
        riemann_ok &= set(rep.kinds()) == {"Circle"}
        worst = max([worst] + [v.residual for _, v in rep.entries if v.kind == "Circle"])
    th = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    rho = 1 + 0.7 * np.cos(th)
    limacon = classify_curve(make_curve(0.0, np.column_stack([rho * np.cos(th), rho * np.sin(th)]), True, "limacon"))
    ratio = cone_spread(64) / cone_spread(128)
    measured.update(riemann_residual=worst, limacon=limacon.kind, spread_ratio=ratio)
    assert cat_ok
    assert riemann_ok and worst <= 1e-3
    assert limacon.kind == "NonConvex"
    assert 1.6 <= ratio <= 2.4


# -- 8 ------------------------------------------------------------------------------


def annulus(h):
    outer = float(np.arcsinh(2.0) - np.arcsinh(1.0))
    return PlanarDomain((Hole(Circle((0.0, 0.0), 1.0), 0.0, "inner"),), 2.0, h, Dirichlet(outer), (0.0, 0.0))


@criterion(8, "PDE solver reproduces the radial catenoid")
def test_pde_closed_form(measured):
    t0 = time.perf_counter()
    errs = {}
    for h in (2e-2, 1e-2):
        sol = relaxation_oracle(annulus(h))
        ref = np.arcsinh(np.hypot(sol.disc.xu, sol.disc.yu)) - np.arcsinh(1.0)
        errs[h] = float(np.max(np.abs(sol.U - ref)))
        assert np.min(sol.deficit) > 0
    elapsed = time.perf_counter() - t0
    measured.update(error=errs[1e-2], ratio=errs[2e-2] / errs[1e-2], seconds=elapsed)
    assert errs[1e-2] <= 1e-3
    assert errs[2e-2] / errs[1e-2] >= 3
    assert elapsed < 60


# -- 9 ------------------------------------------------------------------------------


@criterion(9, "Perron sweeps are monotone and bounded")
def test_perron_mechanics(measured):
    dom = annulus(0.025)
    pair = build_sub_super(dom)
    states = []
    prev = [pair.sub.copy()]
    worst = {"decrease": 0.0, "below": 0.0, "above": 0.0}

    def cb(U, rec):
        worst["decrease"] = max(worst["decrease"], float(np.max(prev[0] - U)))
        worst["below"] = max(worst["below"], float(np.max(pair.sub - U)))
        worst["above"] = max(worst["above"], float(np.max(U - pair.super)))
        prev[0] = U.copy()
        states.append(U.copy())

    sol = perron_solve(dom, pair=pair, callback=cb)
    other = []
    perron_solve(dom, PerronSchedule(cover="uniform", max_sweeps=1, tol=np.inf), pair=pair,
                 callback=lambda U, rec: other.append(U.copy()))
    a, b = states[0], other[0]
    B = sol.disc.b0
    both = is_subsolution(sol.disc, a, B) and is_subsolution(sol.disc, b, B)
    mixed = bool(np.any(a > b) and np.any(b > a))
    m_ok = is_subsolution(sol.disc, pointwise_max(a, b), B)
    measured.update(worst)
    measured.update(sweeps=sol.sweeps, max_is_sub=m_ok)
    assert worst["decrease"] <= 0 and worst["below"] <= 0 and worst["above"] <= 1e-12
    assert both and mixed and m_ok


# -- 10 / 11 ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def theorem52_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("theorem52")
    t0 = time.perf_counter()
    code = run_cli("--out", out, "solve", CONFIGS / "theorem52.toml")
    return out, code, time.perf_counter() - t0


@criterion(10, "two convex holes give a non-convex level")
def test_theorem52(measured, theorem52_run):
    out, code, elapsed = theorem52_run
    conv = json.loads((out / "convergence.json").read_text())
    ver = json.loads((out / "verdicts.json").read_text())
    boundary = sorted(v["kind"] for v in ver["verdicts"] if v["source"].startswith("boundary"))
    interior_nonconvex = sum(v["kind"] == "NonConvex" for v in ver["verdicts"] if v["source"].startswith("contour"))
    beta, t0 = ver["end_fit"]["beta"], ver["end_fit"]["t0"]
    measured.update(agreement=conv["oracle"]["agreement"], nonconvex=interior_nonconvex, beta=beta, t0=t0,
                    seconds=elapsed)
    assert code == 0 and conv["status"] == "converged"
    assert conv["oracle"]["agreement"] <= 1e-5
    assert boundary == ["Circle", "ConvexJordan"]
    assert interior_nonconvex >= 1
    assert abs(beta) < 1e-2 and -1 < t0 < 1
    assert elapsed < 300


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir()) if p.is_file()}


@criterion(11, "repeated runs give byte-identical files")
def test_determinism(measured, theorem52_run, tmp_path):
    same = []
    for k in (1, 2):
        base = tmp_path / f"run{k}"
        assert run_cli("--out", base / "cat", "generate", "catenoid", "--grid", "128x256") == 0
        assert run_cli("--out", base / "catd", "diagnose", base / "cat") == 0
        assert run_cli("--out", base / "rie", "generate", "riemann", "--r", "1.5") == 0
        assert run_cli("--out", base / "ried", "diagnose", base / "rie") == 0
    for sub in ("cat", "catd", "rie", "ried"):
        a, b = outputs(tmp_path / "run1" / sub), outputs(tmp_path / "run2" / sub)
        same.append(a == b and len(a) > 0)
    first, _, _ = theorem52_run
    assert run_cli("--out", tmp_path / "theorem52", "solve", CONFIGS / "theorem52.toml") == 0
    a, b = outputs(first), outputs(tmp_path / "theorem52")
    same.append(a == b)
    measured.update(identical=f"{sum(same)}/{len(same)}")
    assert all(same)
