"""Command-line front end: ``maxsurf [--out DIR] [--threads N] [--verbose] COMMAND ...``.

Commands
--------
generate catenoid|riemann
    Integrate a canonical example; writes ``surface.csv``, ``surface.obj``
    and ``manifest.json``.
diagnose MANIFEST
    Level verdicts, Shiffman and Jacobi residuals, cone points and the end
    fit of a generated surface; writes ``report.json`` and ``shiffman.csv``.
solve CONFIG.toml
    Perron solve of a planar Dirichlet problem with level analysis; writes
    ``nu.csv``, ``graph.obj``, ``verdicts.json``, ``convergence.json``,
    ``solve.log`` and ``manifest.json``.
export MANIFEST
    Level curves (and a mesh) of a surface or PDE output directory.

Exit codes: 0 success, 2 usage or input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("maxsurf")

SURFACE_COLUMNS = ("r", "theta", "re_z", "im_z", "x1", "x2", "x3", "re_g", "im_g", "lambda", "K")
NU_COLUMNS = ("x", "y", "nu", "deficit")
LEVEL_COLUMNS = ("t", "curve", "index", "x1", "x2")
SHIFFMAN_COLUMNS = ("re_z", "im_z", "u", "kappa", "h", "lambda", "K")

DEFAULT_HEIGHTS = {"catenoid": (-0.8, -0.5, -0.2, 0.0, 0.2, 0.5, 0.8),
                   "riemann": (-0.8, -0.5, -0.2, 0.2, 0.5, 0.8)}
CONE_LAMBDA_TOL = 0.05


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _grid_spec(text):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 128x256, got {text!r}")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _complex(text):
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a complex number, got {text!r}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxsurf", description="Maximal surfaces in Lorentz-Minkowski space.")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--threads", type=_positive_int, default=None, help="threads for the linear-algebra backend")
    p.add_argument("--verbose", "-v", action="count", default=0, help="log progress to stderr (repeat for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="integrate a canonical example")
    gs = g.add_subparsers(dest="kind", required=True)
    c = gs.add_parser("catenoid")
    c.add_argument("--scale", type=float, default=1.0)
    c.add_argument("--R", type=float, default=4.0, help="parameter annulus 1/R <= |z| <= R")
    c.add_argument("--grid", type=_grid_spec, default=(128, 256), help="radial x angular nodes")
    r = gs.add_parser("riemann")
    r.add_argument("--r", type=float, required=True, help="ODE parameter")
    r.add_argument("--g0", type=_complex, default=1.0 + 0j, help="Gauss map at the base point")
    r.add_argument("--branch", type=int, choices=(1, -1), default=1)
    r.add_argument("--rect", type=_floats, default=None, help="x0,x1,y0,y1 in the strip coordinate")
    r.add_argument("--grid", type=_grid_spec, default=(61, 161), help="Re z x Im z nodes")

    d = sub.add_parser("diagnose", help="diagnostics of a generated surface")
    d.add_argument("manifest", help="manifest.json (or its directory)")
    d.add_argument("--heights", type=_floats, default=None, help="normalized heights in (-1, 1)")

    s = sub.add_parser("solve", help="Perron solve of a planar configuration")
    s.add_argument("config", help="TOML configuration")

    e = sub.add_parser("export", help="level curves and mesh of an output directory")
    e.add_argument("manifest", help="manifest.json (or its directory)")
    e.add_argument("--heights", type=_floats, required=True)
    e.add_argument("--obj", action="store_true", help="also write mesh.obj")
    return p


# ---------------------------------------------------------------------------
# shared helpers


def _manifest_path(arg) -> Path:
    p = Path(arg)
    return p / "manifest.json" if p.is_dir() else p


def _surface_data(manifest):
    """Rebuild ``(WeierstrassData, grid, base)`` from a manifest record."""
    import numpy as np

    from .canonical import DEFAULT_RECT, RiemannParameter, make_catenoid, make_riemann
    from .io import InputError
    from .weierstrass import polar_grid, rect_grid

    try:
        kind = manifest["kind"]
        prm = manifest["params"]
        gs = manifest["grid"]
        if kind == "catenoid":
            w = make_catenoid(float(prm["scale"]), float(prm["R"]))
            grid = polar_grid(int(gs["n_a"]), int(gs["n_b"]), 1 / float(prm["R"]), float(prm["R"]))
        elif kind == "riemann":
            rect = tuple(prm.get("rect", DEFAULT_RECT))
            param = RiemannParameter(float(prm["r"]), complex(*prm["g0"]), int(prm["branch"]))
            w = make_riemann(param, rect)
            grid = rect_grid(int(gs["n_a"]), int(gs["n_b"]), *rect)
        else:
            raise InputError(f"unknown surface kind {kind!r}")
        base = manifest["base"]
        base = (complex(*base["z0"]), np.asarray(base["X0"], float))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed manifest: {e!r}") from e
    return w, grid, base


def _write_surface(out: Path, S):
    import numpy as np

    from .io import grid_triangles, write_csv, write_obj

    z = S.z
    cols = [np.abs(z), np.angle(z), z.real, z.imag, S.X[..., 0], S.X[..., 1], S.X[..., 2],
            S.g.real, S.g.imag, S.lam, S.K]
    write_csv(out / "surface.csv", SURFACE_COLUMNS, cols)
    idx, tris = grid_triangles(S.present, periodic=S.grid.kind == "polar")
    write_obj(out / "surface.obj", S.X[S.present], tris, comment="maximal surface samples")


def _read_surface(path: Path, w, grid, base):
    """SurfaceGrid from ``surface.csv``; nodes must match the manifest grid."""
    import numpy as np

    from .io import InputError, read_csv
    from .weierstrass import SurfaceGrid

    _, c = read_csv(path, SURFACE_COLUMNS)
    shape = grid.shape
    n = shape[0] * shape[1]
    if c["re_z"].size != n:
        raise InputError(f"{path}: {c['re_z'].size} rows for a {shape[0]}x{shape[1]} grid")
    z = (c["re_z"] + 1j * c["im_z"]).reshape(shape)
    if not np.allclose(z, grid.nodes(), rtol=0, atol=1e-12):
        raise InputError(f"{path}: nodes do not match the manifest grid")
    X = np.stack([c["x1"], c["x2"], c["x3"]], axis=-1).reshape(shape + (3,))
    present = np.all(np.isfinite(X), axis=-1)
    lv = grid.level_values()
    return SurfaceGrid(grid=grid, z=z, X=X, g=(c["re_g"] + 1j * c["im_g"]).reshape(shape),
                       lam=c["lambda"].reshape(shape), K=c["K"].reshape(shape), present=present,
                       base=base, chart=w.chart, slab=(float(lv.min()), float(lv.max())))


def _period_checks(w, kind, prm):
    from .weierstrass import period_check

    if kind == "catenoid":
        R = float(prm["R"])
        loops = [{"center": [0.0, 0.0], "radius": R ** -0.5}, {"center": [0.0, 0.0], "radius": R ** 0.5}]
    else:
        x0, x1, y0, y1 = prm["rect"]
        c = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
        loops = [{"center": list(c), "radius": 0.5 * min(x1 - x0, y1 - y0) / 2}]
    for lp in loops:
        re = period_check(w, lp["radius"], complex(*lp["center"]))
        lp["real_parts"] = list(re)
        lp["norm"] = max(abs(v) for v in re)
    return loops


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args, out: Path) -> int:
    import numpy as np

    from .canonical import DEFAULT_RECT, RiemannParameter, make_catenoid, make_riemann
    from .io import write_json
    from .shiffman import shiffman_field
    from .weierstrass import integrate_immersion, polar_grid, rect_grid

    na, nb = args.grid
    if args.kind == "catenoid":
        w = make_catenoid(args.scale, args.R)
        grid = polar_grid(na, nb, 1 / args.R, args.R)
        base = (1 + 0j, np.zeros(3))
        prm = {"scale": args.scale, "R": args.R}
        R, punctures = args.R, []
    else:
        rect = tuple(args.rect) if args.rect is not None else DEFAULT_RECT
        if len(rect) != 4:
            raise UsageError("--rect needs four numbers x0,x1,y0,y1")
        param = RiemannParameter(args.r, args.g0, args.branch)
        w = make_riemann(param, rect)
        grid = rect_grid(na, nb, *rect)
        base = (0j, np.zeros(3))
        prm = {"r": args.r, "g0": [args.g0.real, args.g0.imag], "branch": args.branch, "rect": list(rect)}
        R, punctures = None, []
    S = integrate_immersion(w, grid, base)
    log.info("integrated %s on a %dx%d grid", args.kind, na, nb)
    _write_surface(out, S)
    field = shiffman_field(w, grid)
    manifest = {
        "kind": args.kind,
        "params": prm,
        "R": R,
        "punctures": punctures,
        "grid": {"type": grid.kind, "n_a": na, "n_b": nb},
        "base": {"z0": [base[0].real, base[0].imag], "X0": list(base[1])},
        "period_check": _period_checks(w, args.kind, prm),
        "max_abs_u": field.max_abs_u,
        "files": {"surface": "surface.csv", "mesh": "surface.obj"},
    }
    write_json(out / "manifest.json", manifest)
    print(f"wrote {out / 'surface.csv'}, {out / 'surface.obj'}, {out / 'manifest.json'}")
    return EXIT_OK


def _end_fit(kind, prm):
    import numpy as np

    from .canonical import RiemannParameter, catenoid_end_chart, catenoid_point, riemann_end_surface
    from .weierstrass import fit_end_asymptotics, integrate_immersion, polar_grid

    if kind == "catenoid":
        s = float(prm["scale"])
        rho = 0.1
        base = (complex(rho), catenoid_point(1 / rho, 0.0, s))
        S = integrate_immersion(catenoid_end_chart(s), polar_grid(12, 64, 0.02, rho), base)
    else:
        S, _ = riemann_end_surface(RiemannParameter(float(prm["r"]), complex(*prm["g0"]), int(prm["branch"])))
    f = fit_end_asymptotics(S, 0j)
    return {"alpha": f.alpha, "beta": f.beta, "t0": f.t0, "kind": f.kind, "residual": f.residual,
            "n_rings": f.n_rings}


def cmd_diagnose(args, out: Path) -> int:
    import numpy as np

    from .io import InputError, read_json, write_csv, write_json
    from .levels import slab_scan
    from .shiffman import harmonic_h_residual, jacobi_residual, shiffman_field
    from .weierstrass import detect_conelike

    mpath = _manifest_path(args.manifest)
    manifest = read_json(mpath)
    if not isinstance(manifest, dict) or "kind" not in manifest:
        raise InputError(f"{mpath} is not a surface manifest")
    w, grid, base = _surface_data(manifest)
    S = _read_surface(mpath.parent / manifest.get("files", {}).get("surface", "surface.csv"), w, grid, base)
    heights = args.heights if args.heights is not None else DEFAULT_HEIGHTS[manifest["kind"]]
    scan = slab_scan(S, heights)
    field = shiffman_field(w, grid)
    cones = [{"P0": c.P0, "spread": c.spread, "n_nodes": int(len(c.nodes))}
             for c in detect_conelike(S, CONE_LAMBDA_TOL)]
    report = {
        "kind": manifest["kind"],
        "params": manifest["params"],
        "verdicts": scan.records(),
        "counts": scan.counts,
        "max_abs_u": field.max_abs_u,
        "jacobi_residual": jacobi_residual(field),
        "harmonic_h_residual": harmonic_h_residual(w, grid),
        "cone_points": cones,
        "end_fit": _end_fit(manifest["kind"], manifest["params"]),
    }
    write_json(out / "report.json", report)
    z = field.z.ravel()
    write_csv(out / "shiffman.csv", SHIFFMAN_COLUMNS,
              [z.real, z.imag, field.u, field.kappa, field.h, field.lam, field.K])
    print(f"{manifest['kind']}: {scan.counts}, max|u| = {report['max_abs_u']:.3e}, "
          f"jacobi = {report['jacobi_residual']:.3e}")
    return EXIT_OK if np.isfinite(report["max_abs_u"]) else EXIT_SOLVER


def _write_nu(out: Path, sol, name="nu.csv"):
    from .io import write_csv

    d = sol.disc
    write_csv(out / name, NU_COLUMNS, [d.xu, d.yu, sol.U, sol.deficit])


def _write_graph(out: Path, sol):
    import numpy as np

    from .io import grid_triangles, write_obj

    d = sol.disc
    idx, tris = grid_triangles(d.unknown)
    V = sol.values
    X, Y = np.meshgrid(d.xs, d.ys, indexing="ij")
    m = d.unknown
    write_obj(out / "graph.obj", np.column_stack([X[m], Y[m], V[m]]), tris, comment="maximal graph nu(x, y)")


def _closed_form_error(cfg, sol):
    import numpy as np

    cf = cfg.closed_form
    if cf.kind != "radial_catenoid":
        from .io import InputError

        raise InputError(f"unknown closed form {cf.kind!r}")
    d = sol.disc
    rho = np.hypot(d.xu - cf.center[0], d.yu - cf.center[1])
    ref = cf.scale * np.arcsinh(rho / cf.scale) + cf.shift
    return float(np.max(np.abs(sol.U - ref)))


def _history_records(hist):
    return [{k: v for k, v in rec.items()} for rec in hist]


def cmd_solve(args, out: Path) -> int:
    import numpy as np

    from .config import load_solve_config
    from .errors import NotConverged
    from .io import write_json
    from .levels import slab_scan
    from .pde import Discretization, fit_pde_end, relaxation_oracle
    from .perron import build_sub_super, perron_solve

    cfg = load_solve_config(args.config)
    domain = cfg.build_domain()
    disc = Discretization(domain)
    lines = [f"config {cfg.name}: {disc.n_u} unknowns, h = {domain.h}, R = {domain.R}"]
    pair = build_sub_super(domain, disc=disc)
    lines.append(f"sub/super pair: {pair.kind}, min gap {pair.gap:.6e}")
    conv = {"config": cfg.name, "unknowns": disc.n_u, "pair": pair.kind}

    def progress(U, rec):
        log.info("sweep %d change %.3e residual %.3e", rec["sweep"], rec["change"], rec["residual"])

    try:
        sol = perron_solve(domain, cfg.perron, pair=pair, disc=disc, callback=progress)
    except NotConverged as e:
        best = e.best
        _write_nu(out, best, "nu_best.csv")
        conv.update({"status": "not_converged", "message": str(e), "history": _history_records(best.history)})
        write_json(out / "convergence.json", conv)
        lines.append(f"NOT CONVERGED: {e}")
        (out / "solve.log").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        print(lines[-1], file=sys.stderr)
        return EXIT_SOLVER
    lines.append(f"perron: converged in {sol.sweeps} sweeps, max |Q| = {sol.residual:.3e}, "
                 f"min deficit {float(np.min(sol.deficit)):.6f}")
    conv.update({"status": "converged", "sweeps": sol.sweeps, "residual": sol.residual,
                 "min_deficit": float(np.min(sol.deficit)), "history": _history_records(sol.history)})
    status = EXIT_OK

    if cfg.oracle.enabled:
        ora = relaxation_oracle(domain, tol=cfg.oracle.tol, max_iter=cfg.oracle.max_iter, disc=disc)
        agree = float(np.max(np.abs(sol.U - ora.U)))
        ok = agree <= cfg.oracle.agreement_tol
        lines.append(f"oracle agreement: {agree:.3e} (tol {cfg.oracle.agreement_tol:g}) {'PASS' if ok else 'FAIL'}")
        conv["oracle"] = {"agreement": agree, "tol": cfg.oracle.agreement_tol, "pass": ok,
                          "residual_history": ora.history}
        if not ok:
            status = EXIT_SOLVER

    if cfg.closed_form is not None:
        err = _closed_form_error(cfg, sol)
        ok = err <= cfg.closed_form.tol
        lines.append(f"closed-form error: {err:.3e} (tol {cfg.closed_form.tol:g}) {'PASS' if ok else 'FAIL'}")
        conv["closed_form"] = {"error": err, "tol": cfg.closed_form.tol, "pass": ok}

    verdicts = {"config": cfg.name}
    if disc.robin:
        t0, beta, rms = fit_pde_end(sol)
        verdicts["end_fit"] = {"t0": t0, "beta": beta, "rms": rms, "closure_t0": sol.t0}
        lines.append(f"end fit: t0 = {t0:.6f}, beta = {beta:.3e}, rms = {rms:.3e}")
    heights = list(cfg.levels.heights)
    if sol.t0 is not None:
        heights += [round(sol.t0 + off, 12) for off in cfg.levels.end_offsets]
    scan = slab_scan(sol, heights)
    verdicts.update({"heights": heights, "verdicts": scan.records(), "counts": scan.counts,
                     "empty_heights": scan.empty})
    lines.append(f"levels: {scan.counts}")

    _write_nu(out, sol)
    _write_graph(out, sol)
    write_json(out / "verdicts.json", verdicts)
    write_json(out / "convergence.json", conv)
    (out / "solve.log").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    write_json(out / "manifest.json", {"kind": "pde", "config": str(Path(args.config).resolve()),
                                       "files": {"nu": "nu.csv", "mesh": "graph.obj", "verdicts": "verdicts.json"}})
    for ln in lines:
        print(ln)
    return status


def _pde_solution(manifest, mdir: Path):
    import numpy as np

    from .config import load_solve_config
    from .io import InputError, read_csv
    from .pde import Discretization, PdeSolution

    try:
        cfg = load_solve_config(manifest["config"])
    except KeyError as e:
        raise InputError("PDE manifest lacks 'config'") from e
    disc = Discretization(cfg.build_domain())
    _, c = read_csv(mdir / manifest.get("files", {}).get("nu", "nu.csv"), NU_COLUMNS)
    if c["x"].size != disc.n_u or not (np.allclose(c["x"], disc.xu, atol=1e-12) and np.allclose(c["y"], disc.yu, atol=1e-12)):
        raise InputError("nu.csv does not match the configured grid")
    U = c["nu"]
    B = disc.boundary_values(U)
    return PdeSolution(disc, U, B, disc.far_field_coefficients(U), float("nan"), [], 0, "file")


def cmd_export(args, out: Path) -> int:
    import numpy as np

    from .io import read_json, write_csv
    from .levels import extract_contours, extract_level

    mpath = _manifest_path(args.manifest)
    manifest = read_json(mpath)
    curves = []
    if manifest.get("kind") == "pde":
        sol = _pde_solution(manifest, mpath.parent)
        for t in args.heights:
            curves += extract_contours(sol.xs, sol.ys, sol.values, sol.mask, t, t_end=sol.t0)
        if args.obj:
            _write_graph(out, sol)
            (out / "graph.obj").replace(out / "mesh.obj")
    else:
        w, grid, base = _surface_data(manifest)
        S = _read_surface(mpath.parent / manifest.get("files", {}).get("surface", "surface.csv"), w, grid, base)
        curves = [extract_level(S, t) for t in args.heights]
        if args.obj:
            _write_surface(out, S)
            (out / "surface.obj").replace(out / "mesh.obj")
            (out / "surface.csv").unlink()
    cols = [[], [], [], [], []]
    for k, c in enumerate(curves):
        p = np.asarray(c.points)
        for col, v in zip(cols, (np.full(len(p), c.t), np.full(len(p), k), np.arange(len(p)), p[:, 0], p[:, 1])):
            col.append(v)
    write_csv(out / "levels.csv", LEVEL_COLUMNS, [np.concatenate(c) if c else np.zeros(0) for c in cols])
    print(f"wrote {len(curves)} level curves to {out / 'levels.csv'}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "diagnose": cmd_diagnose, "solve": cmd_solve, "export": cmd_export}


def _set_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    if args.threads is not None:
        _set_threads(args.threads)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")

    from .errors import MaxsurfError, PreconditionError

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except UsageError as e:
        print(f"maxsurf: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as e:
        print(f"maxsurf: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MaxsurfError as e:
        print(f"maxsurf: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as e:
        print(f"maxsurf: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
