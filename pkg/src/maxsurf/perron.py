"""Perron's method for the discrete maximal graph equation.

The iteration starts from a subsolution and repeatedly replaces it, inside
small interior discs, by the exact discrete solution whose rim data are the
current values (solution lifting).  Discs of one color share no stencil, so
a color is lifted in one block-diagonal Newton solve; colors are swept
forward and backward.  With a planar-end closure the neighbourhood of the
end is lifted as one more block that carries the closure exactly.  The
scheme is monotone, so every lift keeps the iterate between the discrete
sub- and supersolution and the values increase from sweep to sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse, spatial
from scipy.sparse import linalg as spla

from .errors import LocalSolveDiverged, NotConverged, OrderingViolation, PreconditionError
from .pde import DEFICIT_TOL, Discretization, PdeSolution, PlanarDomain, _BorderedSolver, _coefficients, _curve_min_gap

log = logging.getLogger(__name__)

SUB_TOL = 1e-9


# ---------------------------------------------------------------------------
# sub/super pair


@dataclass(frozen=True)
class SubSuperPair:
    """Grid functions ``sub <= super`` on the unknowns, with their boundary values."""

    sub: np.ndarray
    super: np.ndarray
    sub_boundary: np.ndarray
    super_boundary: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return float(np.min(self.super - self.sub))


def _catenoid_profile(a, b, rise):
    """Scale ``s`` with ``s (asinh(b/s) - asinh(a/s)) = rise`` for ``a < b``."""
    from scipy.optimize import brentq

    f = lambda s: s * (np.arcsinh(b / s) - np.arcsinh(a / s)) - rise
    if not rise < b - a:
        raise OrderingViolation(f"no spacelike catenoid barrier rises {rise} over a gap of {b - a}")
    return brentq(f, 1e-9 * (b - a), 1e9 * (b - a), xtol=1e-15, rtol=1e-15, maxiter=500)


def build_sub_super(domain: PlanarDomain, reach: Optional[float] = None, disc: Optional[Discretization] = None):
    """Subsolution / supersolution pair for piecewise-constant boundary data.

    Every boundary piece ``k`` with value ``phi_k`` gets a catenoid profile
    in a radial coordinate ``r_k``: ``r = d_k + delta_k`` for a hole (``d_k``
    the distance to it, ``delta_k`` its smallest curvature radius) and
    ``r = rho`` for a Dirichlet outer circle.  With ``lo, hi`` the extreme
    data values,

        sub   = max(lo, max_k phi_k - s_k |asinh(r_k/s_k) - asinh(r_k0/s_k)|),
        super = min(hi, min_k phi_k + s'_k |asinh(r_k/s'_k) - asinh(r_k0/s'_k)|),

    where ``s_k`` makes the profile fall from ``phi_k`` to ``lo`` (``s'_k``:
    rise to ``hi``) over the distance from piece ``k`` to the nearest other
    piece (or ``reach`` when that is smaller).  Hole profiles are barriers
    because the levels of ``d_k`` curve less than circles of radius
    ``d_k + delta_k``; the outer profile is an exact catenoid.  The sampled
    functions are then projected onto discrete sub- and supersolutions (see
    ``discrete_projection``).  A planar-end closure contributes no piece.
    """
    disc = disc or Discretization(domain)
    ff = domain.far_field
    if not disc.robin and callable(ff.value):
        raise PreconditionError("Perron barriers need constant data on every boundary piece")
    cx, cy = domain.center
    pieces = []
    hole_reach = [float(np.max(np.hypot(*(hl.curve.sample(720) - np.asarray(domain.center)).T))) for hl in domain.holes]
    for k, hl in enumerate(domain.holes):
        gaps = [_curve_min_gap(hl.curve, o.curve) for j, o in enumerate(domain.holes) if j != k]
        if not disc.robin:
            gaps.append(domain.R - hole_reach[k])
        delta = hl.curve.min_curvature_radius
        dist = (lambda c, dl: lambda px, py: np.maximum(c.distance(px, py), 0.0) + dl)(hl.curve, delta)
        pieces.append({"label": hl.label or f"hole{k}", "phi": float(hl.phi), "r": dist, "r0": delta,
                       "gap": min(gaps) if gaps else domain.R - hole_reach[k], "outward": 1.0})
    if not disc.robin:
        pieces.append({"label": "outer", "phi": float(ff.value), "r": lambda px, py: np.hypot(px - cx, py - cy),
                       "r0": float(domain.R), "gap": domain.R - max(hole_reach), "outward": -1.0})
    phis = [p["phi"] for p in pieces]
    lo, hi = min(phis), max(phis)
    sub_fns, sup_fns = [], []
    info = []
    for p in pieces:
        d = p["gap"] if reach is None else min(float(reach), p["gap"])
        a, b = (p["r0"], p["r0"] + d) if p["outward"] > 0 else (p["r0"] - d, p["r0"])
        rec = {"label": p["label"], "phi": p["phi"], "reach": d}
        for side, fns, rise in ((1, sub_fns, p["phi"] - lo), (-1, sup_fns, hi - p["phi"])):
            if rise <= 0:
                continue
            s = _catenoid_profile(a, b, rise)
            rec["s_sub" if side > 0 else "s_super"] = float(s)
            fns.append((lambda r, r0, s, phi, side: lambda px, py:
                        phi - side * s * np.abs(np.arcsinh(r(px, py) / s) - np.arcsinh(r0 / s)))(p["r"], p["r0"], s, p["phi"], side))
        info.append(rec)
    params = {"low": lo, "high": hi, "pieces": info}
    if lo == hi:
        return SubSuperPair(np.full(disc.n_u, lo), np.full(disc.n_u, hi), np.full(disc.n_b, lo),
                            np.full(disc.n_b, hi), "constant", params)

    def v(px, py):
        out = np.full(np.shape(px), lo)
        for f in sub_fns:
            out = np.maximum(out, f(px, py))
        return out

    def w(px, py):
        out = np.full(np.shape(px), hi)
        for f in sup_fns:
            out = np.minimum(out, f(px, py))
        return out

    x, y = disc.xu, disc.yu
    sub_b, sup_b = disc.b0.copy(), disc.b0.copy()
    if disc.robin:
        outer = disc.bowner == -1
        sub_b[outer], sup_b[outer] = v(disc.bx[outer], disc.by[outer]), w(disc.bx[outer], disc.by[outer])
    v0, w0 = v(x, y), w(x, y)
    sub = discrete_projection(disc, v0, sub_b, 1)
    sup = discrete_projection(disc, w0, sup_b, -1)
    params.update({"sub_lowered": float(np.max(v0 - sub)), "super_raised": float(np.max(sup - w0))})
    pair = SubSuperPair(sub, sup, sub_b, sup_b, "barrier", params)
    bad = pair.sub > pair.super
    if np.any(bad):
        raise OrderingViolation(f"sub exceeds super at {int(bad.sum())} nodes; separate the boundary pieces further")
    return pair


def discrete_projection(disc: Discretization, U, B, side=1, tol=SUB_TOL, max_rounds=100):
    """Largest discrete subsolution below ``U`` (``side=1``) or smallest supersolution above it (``side=-1``).

    Nodes violating ``side * Q nu >= -tol`` join an active set on which the
    local Dirichlet problem is solved with the other values fixed; the active
    values are then moved toward that solution only (down for ``side=1``).
    Sampled continuous barriers carry ``O(h^2)`` truncation defects; this
    turns them into genuine discrete barriers.
    """
    U = np.array(U, float)
    active = np.zeros(disc.n_u, bool)
    for _ in range(max_rounds):
        R = disc.residual(U, B, floor=0.0)
        bad = side * R < -tol
        if not np.any(bad):
            return U
        active |= bad
        nodes = np.flatnonzero(active)
        V = U.copy()
        _Block(disc, [Ball((np.nan, np.nan), np.nan, nodes)]).lift(V, B, tol=0.1 * tol)
        U[nodes] = np.minimum(U[nodes], V[nodes]) if side > 0 else np.maximum(U[nodes], V[nodes])
    raise NotConverged("discrete barrier projection did not settle")


# ---------------------------------------------------------------------------
# balls and schedule


@dataclass(frozen=True)
class Ball:
    """Grid disc: unknowns strictly inside ``|x - center| < radius``."""

    center: tuple
    radius: float
    nodes: np.ndarray


@dataclass(frozen=True)
class PerronSchedule:
    """Ball cover and sweep controls.

    ``cover = "whitney"`` uses radii ``min(gamma d, r_max h)`` with ``d`` the
    distance to the boundary, so discs grow away from the boundary;
    ``"uniform"`` caps every radius at ``8 h``.  Consecutive centers are at
    least ``core`` radii apart.  The iteration stops when a full sweep moves
    no value by more than ``tol``.  With a planar-end closure the region
    ``rho >= far_inner R`` is lifted as one block and the discs cover the
    rest with an overlap of ``far_overlap R``.
    """

    cover: str = "whitney"
    gamma: float = 0.8
    r_max: float = np.inf
    core: float = 0.6
    tol: float = 1e-8
    max_sweeps: int = 400
    local_tol: float = 1e-10
    local_max_iter: int = 50
    symmetric: bool = True
    far_inner: float = 0.15
    far_overlap: float = 0.3
    check_bounds: bool = True
    bound_tol: float = 1e-9

    def __post_init__(self):
        if self.cover not in ("whitney", "uniform"):
            raise PreconditionError("cover must be 'whitney' or 'uniform'")
        if not (0 < self.gamma < 1 and 0 < self.core <= 1 and self.tol > 0 and self.local_tol > 0
                and 0 < self.far_inner and self.far_overlap > 0 and self.far_inner + self.far_overlap < 1):
            raise PreconditionError("schedule parameters out of range")

    def radius_cap(self, h):
        return 8.0 * h if self.cover == "uniform" else self.r_max * h


def make_ball(disc: Discretization, center, radius) -> Ball:
    """Grid disc around ``center``; it must not touch the boundary."""
    d = float(disc.domain.distance_to_boundary(np.array([center[0]]), np.array([center[1]]))[0])
    if not radius < d:
        raise PreconditionError(f"ball of radius {radius:.4g} reaches the boundary (distance {d:.4g})")
    sel = np.hypot(disc.xu - center[0], disc.yu - center[1]) < radius
    if not np.any(sel):
        raise PreconditionError("ball contains no unknowns")
    return Ball((float(center[0]), float(center[1])), float(radius), np.flatnonzero(sel))


def ball_cover(disc: Discretization, schedule: PerronSchedule = PerronSchedule(), nodes=None) -> list:
    """Deterministic overlapping cover of the given unknowns (default all) by interior discs."""
    h = disc.domain.h
    d = disc.domain.distance_to_boundary(disc.xu, disc.yu)
    r = np.minimum(schedule.gamma * d, schedule.radius_cap(h))
    order = np.lexsort((np.arange(disc.n_u), -r))
    tree = spatial.cKDTree(np.column_stack([disc.xu, disc.yu]))
    covered = np.zeros(disc.n_u, bool)
    if nodes is not None:
        covered[:] = True
        covered[nodes] = False
    balls = []
    for k in order:
        if covered[k]:
            continue
        c = (disc.xu[k], disc.yu[k])
        nodes = np.array(sorted(tree.query_ball_point(c, r[k] * (1 - 1e-12))), dtype=int)
        if nodes.size == 0:
            nodes = np.array([k])
        core = tree.query_ball_point(c, schedule.core * r[k])
        covered[core] = True
        covered[k] = True
        balls.append(Ball((float(c[0]), float(c[1])), float(r[k]), nodes))
    return balls


def color_balls(disc: Discretization, balls) -> list:
    """Greedy coloring so that balls of one color share no stencil entries.

    Returns a list of colors, each a list of ball indices.
    """
    nb = len(balls)
    rows = np.concatenate([np.full(b.nodes.size, i) for i, b in enumerate(balls)])
    cols = np.concatenate([b.nodes for b in balls])
    S = sparse.csr_matrix((np.ones(rows.size, np.int32), (rows, cols)), shape=(nb, disc.n_u))
    reach = (S @ disc.stencil_pattern() != 0).astype(np.int32)
    C = (reach @ S.T).tocsr()
    C = ((C + C.T) != 0).tocsr()
    color = np.full(nb, -1)
    for i in range(nb):
        used = set(color[C.indices[C.indptr[i]:C.indptr[i + 1]]].tolist())
        c = 0
        while c in used:
            c += 1
        color[i] = c
    return [list(np.flatnonzero(color == c)) for c in range(color.max() + 1)]


# ---------------------------------------------------------------------------
# block lifting


class _Block:
    """Residual and Jacobian restricted to the unknowns of non-interacting balls."""

    def __init__(self, disc: Discretization, balls):
        self.disc = disc
        self.nodes = np.concatenate([b.nodes for b in balls])
        sizes = np.array([b.nodes.size for b in balls])
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.owner = np.repeat(np.arange(len(balls)), sizes)
        self.n_balls = len(balls)
        self.ops = disc.ops.restrict(self.nodes, cols=self.nodes)

    def residual(self, U, B):
        """Rows' residuals and per-ball minimum nodal deficit."""
        v = self.ops.apply(U, B)
        w2 = 1 - v["Gx"] ** 2 - v["Gy"] ** 2
        ok = w2 > 0
        R = np.full(w2.shape, np.nan)
        if np.any(ok):
            Rk, _, _ = _coefficients({k: x[ok] for k, x in v.items()}, 0.0)
            R[ok] = Rk
        return R, np.minimum.reduceat(w2, self.starts)

    def jacobian(self, U, B, with_boundary=False):
        R, J, JB = self.disc.jacobian(U, B, floor=0.0, ops=self.ops, local=True)
        if with_boundary:
            return R, J, JB
        return R, J

    def per_ball_max(self, v):
        return np.maximum.reduceat(np.abs(v), self.starts)

    def harmonic_fill(self, U, B, which):
        """Replace the values of the selected balls by the discrete harmonic fill of their rims."""
        r = self.nodes
        L = self.ops.local["Lxx"] + self.ops.local["Lyy"]
        v = self.ops.apply(U, B)
        R = v["Lxx"] + v["Lyy"]
        J = L
        dx = spla.splu(J.tocsc(), permc_spec="COLAMD").solve(-R)
        sel = which[self.owner]
        U[r[sel]] += dx[sel]

    def lift(self, U, B, tol=1e-10, max_iter=50, floor=DEFICIT_TOL):
        """Solve every ball in place (``U`` is modified); returns Newton iterations used.

        Balls whose start is not spacelike (after a far-field refit moved
        their rim) restart from the harmonic fill of the rim data.
        """
        r = self.nodes
        done = np.zeros(self.n_balls, bool)
        _, dmin = self.residual(U, B)
        if np.any(dmin <= floor):
            self.harmonic_fill(U, B, dmin <= floor)
            _, dmin = self.residual(U, B)
            if np.any(dmin <= floor):
                raise LocalSolveDiverged("no spacelike start for a local solve")
        for it in range(max_iter):
            R, J = self.jacobian(U, B)
            rb = self.per_ball_max(R)
            done |= rb <= tol
            if np.all(done):
                return it
            dx = spla.splu(J, permc_spec="COLAMD").solve(-R)
            dx[done[self.owner]] = 0.0
            step = np.where(done, 0.0, 1.0)
            x0 = U[r].copy()
            while True:
                U[r] = x0 + step[self.owner] * dx
                Rt, dmin = self.residual(U, B)
                rt = self.per_ball_max(Rt)
                ok = done | ((dmin > floor) & ((rt < (1 - 1e-4 * step) * rb) | (step < 1e-3)))
                if np.all(ok):
                    break
                step = np.where(ok, step, 0.5 * step)
                if np.any(~ok & (step < 1e-10)):
                    U[r] = x0
                    raise LocalSolveDiverged("damping floor reached in a local solve")
            # steps that no longer move the values, or no longer reduce a
            # residual already near tol, mark the rounding floor
            tiny = self.per_ball_max(dx) <= 1e-13 * (1 + self.per_ball_max(U[r]))
            stalled = (rt >= 0.9 * rb) & (rb <= 1e3 * tol)
            done |= ((step == 1.0) & tiny) | stalled
        R, _ = self.residual(U, B)
        if np.all(done | (self.per_ball_max(R) <= tol)):
            return max_iter
        raise LocalSolveDiverged(f"local Newton stalled at |R| = {float(np.max(np.abs(R))):.3e}")


class _FarBlock:
    """Neighbourhood of the end: unknowns with ``rho >= inner R``.

    After inversion this region is a disc around the end, so lifting it is a
    solution lifting like any other.  Its local problem carries the
    planar-end closure exactly: outer values follow ``c = P U`` with the fit
    band inside the block (bordered Newton, one sparse LU per step).
    """

    def __init__(self, disc: Discretization, inner):
        dom = disc.domain
        rho = np.hypot(disc.xu - dom.center[0], disc.yu - dom.center[1]) / dom.R
        if not inner < dom.far_field.band[0]:
            raise PreconditionError("far-field block must contain the fit band")
        reach = max(float(np.max(np.hypot(*(hl.curve.sample(512) - np.asarray(dom.center)).T))) for hl in dom.holes)
        if inner * dom.R < reach + 2 * dom.h:
            raise PreconditionError(f"far-field block (rho >= {inner * dom.R:.4g}) comes within 2h of a hole (reach {reach:.4g})")
        self.disc = disc
        self.nodes = np.flatnonzero(rho >= inner)
        self.block = _Block(disc, [Ball((np.nan, np.nan), np.nan, self.nodes)])
        self.P = disc.P[:, self.nodes].toarray()

    def lift(self, U, B, tol=1e-10, max_iter=50, floor=DEFICIT_TOL):
        """Solve in place from the state ``(U, B)``; returns the consistent boundary vector.

        ``B`` may lag behind the closure (the disc sweep moved part of the fit
        band); the line search then blends it toward ``b0 + M P U``.
        """
        disc, blk, r = self.disc, self.block, self.nodes
        B = np.array(B, float)
        for _ in range(max_iter):
            R, J, JB = blk.jacobian(U, B, with_boundary=True)
            gap = disc.boundary_values(U) - B
            rn = float(np.max(np.abs(R)))
            if rn <= tol and np.max(np.abs(gap)) <= tol:
                return disc.boundary_values(U)
            dx = _BorderedSolver(J, JB @ disc.M, self.P).solve(-R - JB @ gap)
            x0, B0 = U[r].copy(), B.copy()
            Bfull = disc.boundary_values(U) + disc.M @ (self.P @ dx)
            step = 1.0
            while True:
                U[r] = x0 + step * dx
                Bt = B0 + step * (Bfull - B0)
                Rt, dmin = blk.residual(U, Bt)
                if dmin[0] > floor and (np.max(np.abs(Rt)) < (1 - 1e-4 * step) * max(rn, tol) or step < 1e-3):
                    break
                step *= 0.5
                if step < 1e-10:
                    U[r] = x0
                    raise LocalSolveDiverged("damping floor reached in the far-field solve")
            B = Bt
            if step == 1.0 and np.max(np.abs(dx)) <= 1e-13 * (1 + np.max(np.abs(U[r]))):
                return disc.boundary_values(U)
        raise LocalSolveDiverged(f"far-field Newton stalled at |R| = {rn:.3e}")


def _solution(disc, U, B, hist, sweeps, method):
    c = disc.far_field_coefficients(U)
    R = disc.residual(U, B, floor=0.0)
    return PdeSolution(disc, U, B, c, float(np.max(np.abs(R))), hist, sweeps, method)


def is_subsolution(disc: Discretization, U, B=None, tol=SUB_TOL, nodes=None) -> bool:
    """Discrete subsolution test ``Q nu >= -tol`` at the given unknowns (default all)."""
    if B is None:
        B = disc.boundary_values(U)
    R = disc.residual(U, B, floor=0.0)
    if nodes is not None:
        R = R[nodes]
    return bool(np.all(R >= -tol))


def pointwise_max(a, b):
    return np.maximum(a, b)


def solution_lift(sol: PdeSolution, ball: Ball, tol=1e-10, sub_tol=SUB_TOL, check=True) -> PdeSolution:
    """Replace the values inside ``ball`` by the local discrete solution.

    The rim data are the current values (boundary entries held fixed).  The
    current state must be a discrete subsolution on the ball.
    """
    disc = sol.disc
    d = float(disc.domain.distance_to_boundary(np.array([ball.center[0]]), np.array([ball.center[1]]))[0])
    if not ball.radius < d:
        raise PreconditionError("ball touches the boundary")
    if check and not is_subsolution(disc, sol.U, sol.B, sub_tol, ball.nodes):
        raise PreconditionError("current values are not a discrete subsolution on the ball")
    U = sol.U.copy()
    _Block(disc, [ball]).lift(U, sol.B, tol=tol)
    return PdeSolution(disc, U, sol.B, sol.c, float(np.max(np.abs(disc.residual(U, sol.B, floor=0.0)))),
                       list(sol.history), sol.sweeps, "lift")


def start_state(disc: Discretization, pair: SubSuperPair) -> PdeSolution:
    U = pair.sub.copy()
    B = disc.boundary_values(U) if disc.robin else disc.b0.copy()
    if disc.robin:
        B = np.where(disc.bowner == -1, np.minimum(np.maximum(B, pair.sub_boundary), pair.super_boundary), B)
    return PdeSolution(disc, U, B, disc.far_field_coefficients(U), np.nan, [], 0, "sub")


def perron_solve(domain: PlanarDomain, schedule: PerronSchedule = PerronSchedule(), pair: Optional[SubSuperPair] = None,
                 disc: Optional[Discretization] = None, callback=None) -> PdeSolution:
    """Perron iteration from the subsolution until a sweep changes no value by more than ``schedule.tol``.

    Each history entry records the sweep change, the smallest nodal
    increment, the bound violations, the residual and the fitted end height.
    """
    disc = disc or Discretization(domain)
    pair = pair or build_sub_super(domain, disc=disc)
    far = None
    cover_nodes = None
    if disc.robin:
        far = _FarBlock(disc, schedule.far_inner)
        rho = np.hypot(disc.xu - domain.center[0], disc.yu - domain.center[1]) / domain.R
        cover_nodes = np.flatnonzero(rho < schedule.far_inner + schedule.far_overlap)
    balls = ball_cover(disc, schedule, cover_nodes)
    colors = color_balls(disc, balls)
    blocks = [_Block(disc, [balls[i] for i in c]) for c in colors]
    log.info("perron: %d unknowns, %d balls, %d colors", disc.n_u, len(balls), len(colors))
    st = start_state(disc, pair)
    U, B = st.U.copy(), st.B.copy()
    hist = []
    for sweep in range(1, schedule.max_sweeps + 1):
        U_old = U.copy()
        backward = schedule.symmetric and sweep % 2 == 0
        if far is not None and backward:
            B = far.lift(U, B, tol=schedule.local_tol, max_iter=schedule.local_max_iter)
        for blk in (blocks[::-1] if backward else blocks):
            blk.lift(U, B, tol=schedule.local_tol, max_iter=schedule.local_max_iter)
        if far is not None and not backward:
            B = far.lift(U, B, tol=schedule.local_tol, max_iter=schedule.local_max_iter)
        inc = U - U_old
        rec = {"sweep": sweep, "change": float(np.max(np.abs(inc))), "min_increment": float(np.min(inc)),
               "below_sub": float(np.max(pair.sub - U)), "above_super": float(np.max(U - pair.super)),
               "residual": float(np.max(np.abs(disc.residual(U, B, floor=0.0)))),
               "t0": float(disc.far_field_coefficients(U)[0]) if disc.robin else None}
        hist.append(rec)
        log.debug("sweep %d change %.3e residual %.3e", sweep, rec["change"], rec["residual"])
        if callback is not None:
            callback(U, rec)
        if schedule.check_bounds and (rec["below_sub"] > schedule.bound_tol or rec["above_super"] > schedule.bound_tol):
            raise OrderingViolation(f"sweep {sweep} left [sub, super] by {max(rec['below_sub'], rec['above_super']):.3e}")
        if rec["change"] < schedule.tol:
            return _solution(disc, U, B, hist, sweep, "perron")
    best = _solution(disc, U, B, hist, schedule.max_sweeps, "perron")
    raise NotConverged(f"no convergence in {schedule.max_sweeps} sweeps (last change {hist[-1]['change']:.3e})",
                       best=best, residual=best.residual, history=hist)
