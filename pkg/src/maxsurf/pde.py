"""Monotone finite-difference discretization of the maximal graph equation.

The operator ``Q nu = div(D nu / sqrt(1 - |D nu|^2))`` is discretized in
non-divergence form on a uniform grid with a nine-point stencil.  Nodes next
to a boundary use Shortley-Weller arms along all eight grid directions: the
neighbour is replaced by the boundary crossing at distance ``theta h``
carrying the boundary value.

Boundary values enter through a vector ``B = b0 + M c``: ``b0`` holds the
hole data (and Dirichlet far-field data); ``c`` holds far-field model
coefficients when a planar-end closure is used.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import FitDegenerate, GeometryError, NotConverged, PreconditionError, SpacelikeViolation

log = logging.getLogger(__name__)

SNAP = 1e-3
DEFICIT_TOL = 1e-10


# ---------------------------------------------------------------------------
# boundary curves


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("circle radius must be positive")

    @property
    def extent(self) -> float:
        return 2 * self.radius

    @property
    def min_curvature_radius(self) -> float:
        return self.radius

    def _local(self, x, y):
        return (np.asarray(x) - self.center[0]) / self.radius, (np.asarray(y) - self.center[1]) / self.radius

    def implicit(self, x, y):
        """Negative inside, positive outside."""
        u, v = self._local(x, y)
        return u * u + v * v - 1

    def crossing(self, x, y, dx, dy):
        """Smallest ``s in (0, 1]`` with ``(x + s dx, y + s dy)`` on the curve (NaN if none)."""
        u, v = self._local(x, y)
        du, dv = np.asarray(dx) / self.radius, np.asarray(dy) / self.radius
        return _first_root(du * du + dv * dv, 2 * (u * du + v * dv), u * u + v * v - 1)

    def distance(self, x, y):
        return np.abs(np.hypot(np.asarray(x) - self.center[0], np.asarray(y) - self.center[1]) - self.radius)

    def sample(self, n=256):
        s = 2 * np.pi * np.arange(n) / n
        return np.column_stack([self.center[0] + self.radius * np.cos(s), self.center[1] + self.radius * np.sin(s)])


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    a: float
    b: float
    angle: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise GeometryError("ellipse semi-axes must be positive")

    @property
    def extent(self) -> float:
        return 2 * max(self.a, self.b)

    @property
    def min_curvature_radius(self) -> float:
        lo, hi = sorted((self.a, self.b))
        return lo * lo / hi

    def _frame(self, x, y):
        c, s = math.cos(self.angle), math.sin(self.angle)
        X, Y = np.asarray(x) - self.center[0], np.asarray(y) - self.center[1]
        return c * X + s * Y, -s * X + c * Y

    def implicit(self, x, y):
        u, v = self._frame(x, y)
        return (u / self.a) ** 2 + (v / self.b) ** 2 - 1

    def crossing(self, x, y, dx, dy):
        u, v = self._frame(x, y)
        c, s = math.cos(self.angle), math.sin(self.angle)
        du = c * np.asarray(dx) + s * np.asarray(dy)
        dv = -s * np.asarray(dx) + c * np.asarray(dy)
        u, v, du, dv = u / self.a, v / self.b, du / self.a, dv / self.b
        return _first_root(du * du + dv * dv, 2 * (u * du + v * dv), u * u + v * v - 1)

    def distance(self, x, y, iters=90):
        """Euclidean distance from exterior points (bisection on the Lagrange parameter)."""
        u, v = self._frame(x, y)
        u, v = np.abs(np.atleast_1d(u).astype(float)), np.abs(np.atleast_1d(v).astype(float))
        e0, e1 = self.a, self.b
        if e0 < e1:
            u, v, e0, e1 = v, u, e1, e0
        out = np.empty(u.shape)
        on_minor = u == 0
        out[on_minor] = np.abs(v[on_minor] - e1)
        on_major = (v == 0) & ~on_minor
        out[on_major] = np.abs(u[on_major] - e0)
        gen = ~(on_minor | on_major)
        y0, y1 = u[gen], v[gen]
        lo = np.zeros_like(y0)
        hi = e0 * np.hypot(y0, y1)
        for _ in range(iters):
            t = 0.5 * (lo + hi)
            F = (e0 * y0 / (t + e0 * e0)) ** 2 + (e1 * y1 / (t + e1 * e1)) ** 2 - 1
            lo = np.where(F > 0, t, lo)
            hi = np.where(F > 0, hi, t)
        t = 0.5 * (lo + hi)
        x0 = e0 * e0 * y0 / (t + e0 * e0)
        x1 = e1 * e1 * y1 / (t + e1 * e1)
        out[gen] = np.hypot(x0 - y0, x1 - y1)
        inside = self.implicit(x, y) < 0
        if np.any(inside):
            raise GeometryError("ellipse distance is only defined outside the ellipse")
        return out.reshape(np.shape(x)) if np.ndim(x) else float(out[0])

    def sample(self, n=256):
        s = 2 * np.pi * np.arange(n) / n
        c, si = math.cos(self.angle), math.sin(self.angle)
        u, v = self.a * np.cos(s), self.b * np.sin(s)
        return np.column_stack([self.center[0] + c * u - si * v, self.center[1] + si * u + c * v])


def _first_root(A, Bq, C):
    disc = Bq * Bq - 4 * A * C
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        r1 = (-Bq - sq) / (2 * A)
        r2 = (-Bq + sq) / (2 * A)
    r1 = np.where((r1 > 0) & (r1 <= 1), r1, np.inf)
    r2 = np.where((r2 > 0) & (r2 <= 1), r2, np.inf)
    r = np.minimum(r1, r2)
    return np.where(np.isfinite(r), r, np.nan)


def _curve_min_gap(c1, c2, n=720):
    """Sampled lower estimate of the distance between two disjoint convex curves."""
    p = c1.sample(n)
    if np.any(c2.implicit(p[:, 0], p[:, 1]) <= 0):
        return -1.0
    q = c2.sample(n)
    if np.any(c1.implicit(q[:, 0], q[:, 1]) <= 0):
        return -1.0
    if isinstance(c2, Circle):
        return float(np.min(c2.distance(p[:, 0], p[:, 1])))
    return float(np.min(c1.distance(q[:, 0], q[:, 1])))


# ---------------------------------------------------------------------------
# far-field closures


@dataclass(frozen=True)
class Dirichlet:
    """Fixed outer values: a constant or a callable ``f(x, y)``."""

    value: Union[float, Callable]

    def __call__(self, x, y):
        if callable(self.value):
            return np.asarray(self.value(x, y), float)
        return np.full(np.shape(x), float(self.value))


@dataclass(frozen=True)
class PlanarRobin:
    """Planar-end matching: ``nu = t0 + sum_k (a_k cos k th + b_k sin k th) / rho^k``.

    Coefficients are least-squares fitted to the solution on the band
    ``band[0] R <= rho <= band[1] R`` and extrapolated to the outer ring.
    """

    harmonics: int = 4
    band: tuple = (0.35, 0.6)


def planar_basis(x, y, center, R, harmonics):
    """Far-field basis columns ``[1, cos k th / (rho/R)^k, sin k th / (rho/R)^k]``."""
    X, Y = np.asarray(x) - center[0], np.asarray(y) - center[1]
    rho = np.hypot(X, Y) / R
    th = np.arctan2(Y, X)
    cols = [np.ones_like(rho)]
    for k in range(1, harmonics + 1):
        cols += [np.cos(k * th) / rho ** k, np.sin(k * th) / rho ** k]
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# domain


@dataclass(frozen=True)
class Hole:
    curve: object
    phi: float
    label: str = ""


@dataclass(frozen=True)
class PlanarDomain:
    """Disc of radius ``R`` around ``center`` minus convex holes with constant data."""

    holes: tuple
    R: float
    h: float
    far_field: object = field(default_factory=PlanarRobin)
    center: Optional[tuple] = None

    def __post_init__(self):
        if not self.h > 0:
            raise GeometryError("grid spacing must be positive")
        if self.center is None:
            pts = np.vstack([hl.curve.sample(256) for hl in self.holes])
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            object.__setattr__(self, "center", (float(0.5 * (lo[0] + hi[0])), float(0.5 * (lo[1] + hi[1]))))
        for i, a in enumerate(self.holes):
            for b in self.holes[i + 1:]:
                gap = _curve_min_gap(a.curve, b.curve)
                if gap < 4 * self.h:
                    raise GeometryError(f"holes {a.label or i} and {b.label} overlap or are closer than 4h (gap {gap:.4g})")
            pts = a.curve.sample(256)
            if np.max(np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])) > self.R - 4 * self.h:
                raise GeometryError("hole reaches the truncation circle")
        if isinstance(self.far_field, PlanarRobin):
            ext = max(hl.curve.extent for hl in self.holes)
            if self.R < 5 * ext:
                raise GeometryError(f"truncation radius {self.R} is below 5x the hole extent {ext}")

    @property
    def outer(self) -> Circle:
        return Circle(self.center, self.R)

    def distance_to_boundary(self, x, y):
        d = self.R - np.hypot(np.asarray(x) - self.center[0], np.asarray(y) - self.center[1])
        for hl in self.holes:
            d = np.minimum(d, hl.curve.distance(x, y))
        return d


# ---------------------------------------------------------------------------
# discretization

_DIRS = {"e": (1, 0), "w": (-1, 0), "n": (0, 1), "s": (0, -1),
         "ne": (1, 1), "sw": (-1, -1), "se": (1, -1), "nw": (-1, 1)}
# second-difference directions: (plus arm, minus arm)
_PAIRS = {"xx": ("e", "w"), "yy": ("n", "s"), "dd": ("ne", "sw"), "aa": ("se", "nw")}


class Operators:
    """Sparse difference operators acting on ``x = [U, B]`` (rows: unknowns).

    ``Gx, Gy`` are Shortley-Weller central gradients; ``Lxx, Lyy`` axis and
    ``Ldd, Laa`` diagonal second differences along ``(1, 1)`` and ``(1, -1)``
    (unnormalized, so a regular ``Ldd`` is ``(u_NE - 2 u + u_SW) / h^2``).
    """

    names = ("Gx", "Gy", "Lxx", "Lyy", "Ldd", "Laa")

    def __init__(self, mats, n_u):
        self.mats = {k: m.tocsr() for k, m in mats.items()}
        self.n_u = n_u

    def restrict(self, rows, cols=None):
        """Row subset; with ``cols`` the unknown columns are restricted too (for local Jacobians)."""
        sub = Operators({k: m[rows] for k, m in self.mats.items()}, self.n_u)
        if cols is not None:
            sub.local = {k: m[:, cols].tocsr() for k, m in sub.mats.items()}
        sub.bpart = {k: m[:, self.n_u:].tocsr() for k, m in sub.mats.items()}
        sub.upart = {k: m[:, :self.n_u].tocsr() for k, m in sub.mats.items()}
        return sub

    def apply(self, U, B):
        if not hasattr(self, "upart"):
            x = np.concatenate([U, B])
            return {k: m @ x for k, m in self.mats.items()}
        return {k: self.upart[k] @ U + self.bpart[k] @ B for k in self.names}


def _coefficients(v, floor):
    """Residual and its partial derivatives from the operator values ``v``."""
    gx, gy = v["Gx"], v["Gy"]
    w2 = 1 - gx * gx - gy * gy
    if np.any(w2 <= floor):
        raise SpacelikeViolation(f"deficit {float(np.min(w2)):.3e} <= {floor}")
    b = gx * gy
    ab = np.abs(b)
    bp, bm = np.maximum(b, 0.0), np.maximum(-b, 0.0)
    sb = np.sign(b)
    cxx, cyy = 1 - gy * gy - ab, 1 - gx * gx - ab
    lxx, lyy, ldd, laa = v["Lxx"], v["Lyy"], v["Ldd"], v["Laa"]
    qnd = cxx * lxx + cyy * lyy + bp * ldd + bm * laa
    iw3 = w2 ** -1.5
    R = qnd * iw3
    dqx = -2 * gx * lyy - sb * gy * (lxx + lyy) + np.where(b > 0, gy * ldd, 0.0) - np.where(b < 0, gy * laa, 0.0)
    dqy = -2 * gy * lxx - sb * gx * (lxx + lyy) + np.where(b > 0, gx * ldd, 0.0) - np.where(b < 0, gx * laa, 0.0)
    iw5 = w2 ** -2.5
    coef = {"Gx": dqx * iw3 + 3 * gx * qnd * iw5, "Gy": dqy * iw3 + 3 * gy * qnd * iw5,
            "Lxx": cxx * iw3, "Lyy": cyy * iw3, "Ldd": bp * iw3, "Laa": bm * iw3}
    return R, coef, w2


class Discretization:
    """Unknowns, boundary entries and sparse difference operators for a domain.

    The operator is the quasilinear form of the maximal graph equation,

        Q nu = [(1 - nu_y^2) nu_xx + 2 nu_x nu_y nu_xy + (1 - nu_x^2) nu_yy] / W^3,

    ``W^2 = 1 - |D nu|^2``, which equals ``div(D nu / W)``.  The mixed term is
    split along the diagonal that makes every neighbour coefficient
    nonnegative (``2 b nu_xy = |b| (nu_dd - nu_xx - nu_yy)`` for ``b > 0``,
    with the anti-diagonal for ``b < 0``), so the scheme is monotone while
    ``sqrt(2) |D nu|^2 < 1`` and obeys a discrete comparison principle.
    """

    def __init__(self, domain: PlanarDomain):
        self.domain = domain
        h = domain.h
        cx, cy = domain.center
        M = int(math.ceil(domain.R / h)) + 2
        self.xs = cx + h * np.arange(-M, M + 1)
        self.ys = cy + h * np.arange(-M, M + 1)
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        inside = np.hypot(X - cx, Y - cy) < domain.R
        for hl in domain.holes:
            inside &= hl.curve.implicit(X, Y) > 0
        curves = [hl.curve for hl in domain.holes] + [domain.outer]
        owners = list(range(len(domain.holes))) + [-1]

        # crossings along the eight arms of every inside node
        arms = {}
        owner_of = {}
        for d, (di, dj) in _DIRS.items():
            best = np.full(X.shape, np.inf)
            bown = np.full(X.shape, -2)
            # neighbour coordinates taken from the node arrays (no re-rounding)
            Xn = np.roll(X, (-di, -dj), axis=(0, 1))
            Yn = np.roll(Y, (-di, -dj), axis=(0, 1))
            for cur, ow in zip(curves, owners):
                s = cur.crossing(X, Y, Xn - X, Yn - Y)
                s = np.where(inside, s, np.nan)
                better = np.isfinite(s) & (s < best)
                best = np.where(better, s, best)
                bown = np.where(better, ow, bown)
            # grazing contacts: neighbour outside but no transversal crossing found
            out_n = np.hypot(Xn - cx, Yn - cy) >= domain.R
            own_n = np.where(out_n, -1, -2)
            for k, hl in enumerate(domain.holes):
                own_n = np.where((own_n == -2) & (hl.curve.implicit(Xn, Yn) <= 0), k, own_n)
            graze = inside & ~np.isfinite(best) & (own_n != -2)
            best = np.where(graze, 1.0, best)
            bown = np.where(graze, own_n, bown)
            arms[d], owner_of[d] = best, bown

        # snap nodes that sit on a boundary
        snap = np.zeros(X.shape, bool)
        snap_owner = np.full(X.shape, -2)
        for d in _DIRS:
            hit = inside & (arms[d] < SNAP) & ~snap
            snap |= hit
            snap_owner = np.where(hit, owner_of[d], snap_owner)
        unknown = inside & ~snap
        self.unknown = unknown
        n_u = int(unknown.sum())
        idx = np.full(X.shape, -1)
        idx[unknown] = np.arange(n_u)
        self.index = idx
        self.n_u = n_u
        self.iu, self.ju = np.nonzero(unknown)
        self.xu, self.yu = X[unknown], Y[unknown]

        # boundary entries: snapped nodes first, then arm crossings
        bx, by, bown = [X[snap]], [Y[snap]], [snap_owner[snap]]
        bidx = np.full(X.shape, -1)
        bidx[snap] = np.arange(int(snap.sum()))
        nb = int(snap.sum())
        nbr = {}
        arm_len = {}
        P = (self.iu, self.ju)
        for d, (di, dj) in _DIRS.items():
            s = arms[d][P]
            cut = np.isfinite(s)
            ni, nj = self.iu + di, self.ju + dj
            col = np.where(cut, -1, idx[ni, nj])
            # neighbour is a snapped node
            sn = (~cut) & snap[ni, nj]
            col = np.where(sn, n_u + bidx[ni, nj], col)
            k = int(cut.sum())
            bx.append(self.xu[cut] + di * h * s[cut])
            by.append(self.yu[cut] + dj * h * s[cut])
            bown.append(owner_of[d][P][cut])
            col[cut] = n_u + nb + np.arange(k)
            nb += k
            if np.any(col < 0):
                raise GeometryError("grid neighbour outside the domain without a crossing")
            nbr[d] = col
            arm_len[d] = np.where(cut, np.maximum(s, SNAP) * h, h)
        self.bx = np.concatenate(bx)
        self.by = np.concatenate(by)
        self.bowner = np.concatenate(bown).astype(int)
        self.n_b = nb
        self.nbr, self.arm = nbr, arm_len
        self.regular = np.all([arm_len[d] == h for d in _DIRS], axis=0)
        self._build_operators()
        self._build_boundary()

    # -- operators ----------------------------------------------------------

    def _build_operators(self):
        n_u, n = self.n_u, self.n_u + self.n_b
        rows = np.arange(n_u)
        r3 = np.concatenate([rows, rows, rows])

        def three(p, m, cp, cm):
            c = np.concatenate([self.nbr[p], self.nbr[m], rows])
            v = np.concatenate([cp, cm, -(cp + cm)])
            return sparse.csr_matrix((v, (r3, c)), shape=(n_u, n))

        mats = {}
        for name, (p, m) in (("Gx", ("e", "w")), ("Gy", ("n", "s"))):
            hp, hm = self.arm[p], self.arm[m]
            den = hp * hm * (hp + hm)
            mats[name] = three(p, m, hm * hm / den, -hp * hp / den)
        for key, (p, m) in _PAIRS.items():
            hp, hm = self.arm[p], self.arm[m]
            mats["L" + key] = three(p, m, 2 / (hp * (hp + hm)), 2 / (hm * (hp + hm)))
        self.ops = Operators(mats, n_u)

    def _build_boundary(self):
        dom = self.domain
        self.b0 = np.zeros(self.n_b)
        for k, hl in enumerate(dom.holes):
            self.b0[self.bowner == k] = hl.phi
        outer = self.bowner == -1
        self.outer_entries = np.flatnonzero(outer)
        ff = dom.far_field
        self.robin = isinstance(ff, PlanarRobin)
        if self.robin:
            nc = 2 * ff.harmonics + 1
            Mo = np.zeros((self.n_b, nc))
            Mo[outer] = planar_basis(self.bx[outer], self.by[outer], dom.center, dom.R, ff.harmonics)
            self.M = sparse.csr_matrix(Mo)
            rho = np.hypot(self.xu - dom.center[0], self.yu - dom.center[1]) / dom.R
            band = np.flatnonzero((rho >= ff.band[0]) & (rho <= ff.band[1]))
            if band.size < 3 * nc:
                raise FitDegenerate(f"far-field band holds {band.size} nodes for {nc} coefficients")
            A = planar_basis(self.xu[band], self.yu[band], dom.center, dom.R, ff.harmonics)
            if np.linalg.cond(A) > 1e10:
                raise FitDegenerate("far-field fit matrix is numerically singular")
            pinv = np.linalg.pinv(A)
            self.P = sparse.csr_matrix((pinv.ravel(), (np.repeat(np.arange(nc), band.size), np.tile(band, nc))),
                                       shape=(nc, self.n_u))
            self.band = band
            self.n_c = nc
        else:
            self.b0[outer] = ff(self.bx[outer], self.by[outer])
            self.M = sparse.csr_matrix((self.n_b, 0))
            self.P = sparse.csr_matrix((0, self.n_u))
            self.n_c = 0

    # -- evaluation ---------------------------------------------------------

    def boundary_values(self, U=None, c=None):
        if not self.robin:
            return self.b0.copy()
        if c is None:
            c = self.P @ U
        return self.b0 + self.M @ c

    def far_field_coefficients(self, U):
        return self.P @ U if self.robin else np.zeros(0)

    def residual(self, U, B, floor=DEFICIT_TOL, ops=None):
        R, _, _ = _coefficients((ops or self.ops).apply(U, B), floor)
        return R

    def node_deficit(self, U, B, ops=None):
        v = (ops or self.ops).apply(U, B)
        return 1 - v["Gx"] ** 2 - v["Gy"] ** 2

    def min_deficit(self, U, B):
        return float(np.min(self.node_deficit(U, B)))

    def jacobian(self, U, B, floor=DEFICIT_TOL, ops=None, local=False):
        """``(R, dR/dU, dR/dB)``; with ``local`` the unknown columns are the restricted ones."""
        ops = ops or self.ops
        R, coef, _ = _coefficients(ops.apply(U, B), floor)
        JU = JB = None
        for k in Operators.names:
            dg = sparse.diags(coef[k])
            if hasattr(ops, "bpart"):
                ju = dg @ (ops.local[k] if local else ops.upart[k])
                jb = dg @ ops.bpart[k]
            else:
                ju = dg @ ops.mats[k][:, :self.n_u]
                jb = dg @ ops.mats[k][:, self.n_u:]
            JU = ju if JU is None else JU + ju
            JB = jb if JB is None else JB + jb
        return R, JU.tocsc(), JB.tocsr()

    def laplacian(self):
        L = self.ops.mats["Lxx"] + self.ops.mats["Lyy"]
        return L[:, :self.n_u].tocsc(), L[:, self.n_u:].tocsr()

    def stencil_pattern(self):
        """Boolean unknown-unknown coupling (symmetrized, with the diagonal)."""
        pat = None
        for m in self.ops.mats.values():
            p = abs(m[:, :self.n_u])
            pat = p if pat is None else pat + p
        pat = (pat != 0).astype(np.int32)
        eye = sparse.identity(self.n_u, dtype=np.int32, format="csr")
        return ((pat + pat.T + eye) != 0).astype(np.int32).tocsr()

    def to_grid(self, U):
        """Values on the full node array; NaN away from the unknowns."""
        V = np.full((self.xs.size, self.ys.size), np.nan)
        V[self.iu, self.ju] = U
        return V


# ---------------------------------------------------------------------------
# solutions


@dataclass
class PdeSolution:
    """A converged (or best) grid function with diagnostics."""

    disc: Discretization
    U: np.ndarray
    B: np.ndarray
    c: np.ndarray
    residual: float
    history: list
    sweeps: int
    method: str

    @property
    def domain(self):
        return self.disc.domain

    @property
    def xs(self):
        return self.disc.xs

    @property
    def ys(self):
        return self.disc.ys

    @property
    def values(self):
        return self.disc.to_grid(self.U)

    @property
    def mask(self):
        return self.disc.unknown

    @property
    def t0(self) -> Optional[float]:
        return float(self.c[0]) if self.c.size else None

    @property
    def deficit(self):
        return self.disc.node_deficit(self.U, self.B)

    def q_residuals(self):
        return self.disc.residual(self.U, self.B)


def q_residual(sol: PdeSolution, node) -> float:
    """Discrete ``Q nu`` at an unknown node, given by unknown index or grid index ``(i, j)``.

    Raises ``SpacelikeViolation`` when the deficit at the node or at one of
    its unknown neighbours is at most ``1e-10``.
    """
    disc = sol.disc
    k = disc.index[node] if isinstance(node, tuple) else int(node)
    if k < 0 or k >= disc.n_u:
        raise PreconditionError("node is not an interior unknown")
    stencil = [k] + [int(disc.nbr[d][k]) for d in _DIRS if disc.nbr[d][k] < disc.n_u]
    ops = disc.ops.restrict(np.array(stencil))
    _coefficients(ops.apply(sol.U, sol.B), DEFICIT_TOL)
    return float(disc.residual(sol.U, sol.B, ops=disc.ops.restrict(np.array([k])))[0])


def residual_for_values(disc: Discretization, U, B=None):
    if B is None:
        B = disc.boundary_values(U)
    return disc.residual(U, B)


def far_field_condition(disc: Discretization, U) -> dict:
    """Far-field closure state for the current iterate: fitted coefficients and outer values."""
    c = disc.far_field_coefficients(U)
    B = disc.boundary_values(U, c if disc.robin else None)
    return {"mode": "PlanarRobin" if disc.robin else "Dirichlet", "t0": float(c[0]) if c.size else None,
            "coefficients": c, "outer_values": B[disc.outer_entries]}


def fit_pde_end(sol: PdeSolution, band=(0.25, 0.55), harmonics=4):
    """Fit ``t0 + beta log rho + harmonics`` to the solution on a band; returns ``(t0, beta, rms)``."""
    disc = sol.disc
    dom = disc.domain
    rho = np.hypot(disc.xu - dom.center[0], disc.yu - dom.center[1]) / dom.R
    sel = (rho >= band[0]) & (rho <= band[1])
    if sel.sum() < 10 * (2 * harmonics + 2):
        raise FitDegenerate("too few nodes in the end-fit band")
    A = planar_basis(disc.xu[sel], disc.yu[sel], dom.center, dom.R, harmonics)
    A = np.column_stack([A, np.log(rho[sel])])
    coef, *_ = np.linalg.lstsq(A, sol.U[sel], rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - sol.U[sel]) ** 2)))
    # report t0 at rho = R (log term normalized there)
    return float(coef[0]), float(coef[-1]), rms


# ---------------------------------------------------------------------------
# global Newton oracle


class _BorderedSolver:
    """Solve ``(JU + W P) x = r`` by Woodbury with one sparse LU of ``JU``."""

    def __init__(self, JU, W=None, P=None):
        self.lu = spla.splu(JU.tocsc(), permc_spec="COLAMD")
        self.P = P
        if W is not None and W.shape[1]:
            Wd = W.toarray() if sparse.issparse(W) else np.asarray(W)
            self.Y = self.lu.solve(Wd)
            self.S = np.linalg.inv(np.eye(Wd.shape[1]) + P @ self.Y)
        else:
            self.Y = None

    def solve(self, r):
        z = self.lu.solve(r)
        if self.Y is None:
            return z
        return z - self.Y @ (self.S @ (self.P @ z))


def harmonic_start(disc: Discretization):
    """Discrete harmonic interpolant of the boundary data (with the same far-field closure)."""
    JU, JB = disc.laplacian()
    rhs = -(JB @ disc.b0)
    if disc.robin:
        sol = _BorderedSolver(JU, JB @ disc.M, disc.P)
    else:
        sol = _BorderedSolver(JU)
    return sol.solve(rhs)


def relaxation_oracle(domain: PlanarDomain, tol=1e-11, max_iter=60, floor=1e-6, U0=None, disc=None,
                      step_tol=1e-11) -> PdeSolution:
    """Global damped Newton with deficit-preserving line search.

    Stops when ``max |R| <= tol`` or when a full Newton step changes no value
    by more than ``step_tol`` (relative); the latter marks the rounding
    floor, which grows like ``1/(theta h)^2`` at tiny cut arms.

    Far-field coefficients are eliminated exactly (``c = P U``), so the
    iteration solves the closed discrete system in one go.
    """
    disc = disc or Discretization(domain)
    U = harmonic_start(disc) if U0 is None else np.asarray(U0, float).copy()
    # pull the start back into the spacelike region if needed
    B = disc.boundary_values(U)
    lam = 1.0
    base = float(np.mean(disc.b0)) if disc.n_b else 0.0
    while disc.min_deficit(U, B) <= floor:
        lam *= 0.5
        U = base + 0.5 * (U - base)
        B = disc.boundary_values(U)
        if lam < 1e-6:
            raise NotConverged("could not find a spacelike starting guess")
    hist = []
    for it in range(max_iter):
        R, JU, JB = disc.jacobian(U, B, floor=0.0)
        rn = float(np.max(np.abs(R)))
        hist.append(rn)
        log.debug("oracle it %d |R| = %.3e", it, rn)
        if rn <= tol:
            c = disc.far_field_coefficients(U)
            return PdeSolution(disc, U, B, c, rn, hist, it, "relaxation")
        solver = _BorderedSolver(JU, JB @ disc.M, disc.P) if disc.robin else _BorderedSolver(JU)
        dU = solver.solve(-R)
        step = 1.0
        while True:
            Un = U + step * dU
            Bn = disc.boundary_values(Un)
            if disc.min_deficit(Un, Bn) > floor:
                Rn = disc.residual(Un, Bn, floor=0.0)
                if np.max(np.abs(Rn)) < (1 - 1e-4 * step) * rn or step < 1e-3:
                    break
            step *= 0.5
            if step < 1e-10:
                raise NotConverged("line search failed", best=U, residual=rn, history=hist)
        U, B = Un, Bn
        if step == 1.0 and np.max(np.abs(dU)) <= step_tol * (1 + np.max(np.abs(U))):
            # Newton has reached the rounding floor of the residual
            converged = True
            break
    else:
        converged = False
    R = disc.residual(U, B, floor=0.0)
    rn = float(np.max(np.abs(R)))
    hist.append(rn)
    c = disc.far_field_coefficients(U)
    if not converged and rn > tol:
        raise NotConverged(f"oracle stopped at |R| = {rn:.3e}", best=PdeSolution(disc, U, B, c, rn, hist, max_iter, "relaxation"),
                           residual=rn, history=hist)
    return PdeSolution(disc, U, B, c, rn, hist, len(hist), "relaxation")
