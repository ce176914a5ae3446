"""Doubling check of the far-field truncation radius on the two-hole configuration.

Solves with the relaxation oracle at R, 2R, 4R and reports the change of the
fitted end height and of the solution on the nodes within ``--near`` of the
domain centre.

    python scripts/truncation_check.py configs/theorem52.toml --radii 20,40,80
"""

import argparse
import dataclasses
import time

import numpy as np

from maxsurf.config import load_solve_config
from maxsurf.pde import fit_pde_end, relaxation_oracle


def near_values(sol, near):
    d = sol.disc
    cx, cy = d.domain.center
    sel = np.hypot(d.xu - cx, d.yu - cy) <= near
    keys = zip(np.round(d.xu[sel] / d.domain.h).astype(int), np.round(d.yu[sel] / d.domain.h).astype(int))
    return dict(zip(keys, sol.U[sel]))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--radii", default="20,40,80")
    p.add_argument("--near", type=float, default=10.0)
    args = p.parse_args(argv)
    cfg = load_solve_config(args.config)
    prev = None
    for R in (float(r) for r in args.radii.split(",")):
        dom = dataclasses.replace(cfg.domain, R=R).build(cfg.far_field.closure())
        t = time.perf_counter()
        sol = relaxation_oracle(dom, tol=cfg.oracle.tol, max_iter=cfg.oracle.max_iter)
        t0, beta, rms = fit_pde_end(sol, band=cfg.far_field.band, harmonics=cfg.far_field.harmonics)
        vals = near_values(sol, args.near)
        line = f"R={R:6.1f}  nodes={sol.disc.n_u:7d}  t0={t0:+.6f}  beta={beta:+.2e}  rms={rms:.1e}"
        if prev is not None:
            common = vals.keys() & prev[1].keys()
            dv = max(abs(vals[k] - prev[1][k]) for k in common)
            line += f"  |dt0|={abs(t0 - prev[0]):.2e}  max|dU| near={dv:.2e}"
        print(line + f"  ({time.perf_counter() - t:.1f} s)", flush=True)
        prev = (t0, vals)


if __name__ == "__main__":
    main()
