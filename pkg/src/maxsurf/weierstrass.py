"""Weierstrass data for maximal surfaces and their numerical realization.

A maximal spacelike immersion is ``X = X0 + Re int (w1, w2, w3)`` with

    w1 = (1 + g^2) eta / 2,   w2 = i (1 - g^2) eta / 2,   w3 = g eta,

where ``g`` is the Gauss map (in the chart of :func:`maxsurf.lorentz.stereographic`)
and ``eta = h(z) dz``.  Two parameter charts are used throughout:

``"annulus"``
    levels of the height are the circles ``|z - c| = const`` (``X3 ~ log|z|``);
``"strip"``
    levels are the vertical lines ``Re z = const`` (``X3 ~ Re z``).

The chart only matters for quantities defined on level curves (curvature,
Shiffman function); integration and the metric are chart-agnostic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import ndimage, interpolate, spatial

from .errors import (
    InsufficientRings,
    NotAConeCircle,
    NotAGraph,
    PreconditionError,
    PunctureEvaluation,
    PunctureOnPath,
    QuadratureDivergence,
    SingularPoint,
    SpacelikeViolation,
)
from .lorentz import stereographic, stereographic_array

log = logging.getLogger(__name__)

PUNCTURE_TOL = 1e-12

# 8-point Gauss-Legendre rule mapped to [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
GL_NODES = 0.5 * (_GL_X + 1.0)
GL_WEIGHTS = 0.5 * _GL_W


# ---------------------------------------------------------------------------
# domains and data


@dataclass(frozen=True)
class AnnulusDomain:
    """Parameter annulus ``1/R <= |z| <= R`` with optional punctures."""

    R: float
    punctures: tuple = ()
    end_puncture: Optional[complex] = None

    def __post_init__(self):
        if not self.R > 1:
            raise PreconditionError(f"annulus needs R > 1, got {self.R}")
        for p in self.punctures:
            m = abs(p)
            if abs(m - self.R) > 1e-12 and abs(m - 1 / self.R) > 1e-12:
                raise PreconditionError(f"boundary puncture {p} is not on |z| = R or 1/R")
        if self.end_puncture is not None:
            m = abs(self.end_puncture)
            if not 1 / self.R < m < self.R:
                raise PreconditionError("end puncture must be strictly interior")

    @property
    def all_punctures(self) -> tuple:
        extra = () if self.end_puncture is None else (self.end_puncture,)
        return tuple(self.punctures) + extra


@dataclass(frozen=True)
class RectDomain:
    """Rectangle ``[x0, x1] x [y0, y1]`` in a strip coordinate."""

    x0: float
    x1: float
    y0: float
    y1: float
    punctures: tuple = ()

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise PreconditionError("degenerate rectangle")

    @property
    def all_punctures(self) -> tuple:
        return tuple(self.punctures)


@dataclass(frozen=True)
class GaussSample:
    g: np.ndarray
    dg: np.ndarray
    d2g: Optional[np.ndarray]
    h: np.ndarray


@dataclass(frozen=True)
class WeierstrassData:
    """Evaluable Weierstrass data ``(g, eta = h dz)``.

    ``gauss(z)`` returns ``(g, g', g'')`` for an array of parameters (``g''``
    may be ``None`` when not available); ``eta(z, g)`` returns the density
    ``h``.  Both must accept numpy arrays of any shape.
    """

    gauss: Callable
    eta: Callable
    domain: object = None
    chart: str = "annulus"
    center: complex = 0j
    label: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.chart not in ("annulus", "strip"):
            raise PreconditionError(f"unknown chart {self.chart!r}")

    @classmethod
    def closed_form(cls, g, dg, h, d2g=None, **kw) -> "WeierstrassData":
        """Wrap explicit callables ``g(z)``, ``g'(z)``, ``h(z)`` (and ``g''(z)``)."""

        def gauss(z):
            z = np.asarray(z, dtype=complex)
            gv = np.broadcast_to(np.asarray(g(z), dtype=complex), z.shape)
            dv = np.broadcast_to(np.asarray(dg(z), dtype=complex), z.shape)
            sv = None if d2g is None else np.broadcast_to(np.asarray(d2g(z), dtype=complex), z.shape)
            return gv, dv, sv

        def eta(z, gv):
            z = np.asarray(z, dtype=complex)
            return np.broadcast_to(np.asarray(h(z), dtype=complex), z.shape)

        return cls(gauss=gauss, eta=eta, **kw)

    @property
    def punctures(self) -> tuple:
        return () if self.domain is None else self.domain.all_punctures

    def check_punctures(self, z, tol=PUNCTURE_TOL):
        z = np.asarray(z, dtype=complex)
        for p in self.punctures:
            if np.any(np.abs(z - p) < tol):
                raise PunctureEvaluation(f"evaluation within {tol} of puncture {p}")

    def sample(self, z) -> GaussSample:
        z = np.asarray(z, dtype=complex)
        self.check_punctures(z)
        g, dg, d2g = self.gauss(z)
        h = self.eta(z, g)
        return GaussSample(np.asarray(g), np.asarray(dg), None if d2g is None else np.asarray(d2g), np.asarray(h))

    def level_coordinate(self, z):
        """Height-like coordinate whose level sets are the level curves."""
        z = np.asarray(z, dtype=complex)
        if self.chart == "strip":
            return z.real
        return np.log(np.abs(z - self.center))


# ---------------------------------------------------------------------------
# pointwise quantities


def _omega(s: GaussSample):
    g2 = s.g * s.g
    return np.stack([0.5 * (1 + g2) * s.h, 0.5j * (1 - g2) * s.h, s.g * s.h], axis=-1)


def omega_triple(w: WeierstrassData, z):
    """Densities of ``(w1, w2, w3)`` at ``z``; shape ``z.shape + (3,)``."""
    out = _omega(w.sample(z))
    return tuple(complex(c) for c in out) if out.ndim == 1 else out


def _lambda(s: GaussSample):
    return np.abs(1 - np.abs(s.g) ** 2) * np.abs(s.h) / 2


def metric_factor(w: WeierstrassData, z):
    """Conformal factor ``lambda`` with ``ds = lambda |dz|``."""
    lam = _lambda(w.sample(z))
    return float(lam) if lam.ndim == 0 else lam


def _curvature(s: GaussSample, lam_floor=1e-12):
    lam = _lambda(s)
    if np.any(lam < lam_floor):
        raise SingularPoint("Gauss curvature requested where the metric degenerates")
    return (4 * np.abs(s.dg) / (np.abs(1 - np.abs(s.g) ** 2) ** 2 * np.abs(s.h))) ** 2


def gauss_curvature(w: WeierstrassData, z):
    K = _curvature(w.sample(z))
    return float(K) if K.ndim == 0 else K


def gauss_map(w: WeierstrassData, z):
    """Unit normal ``sigma(g(z))`` as a :class:`HyperbolicPoint` (scalar ``z``)
    or an array of shape ``z.shape + (3,)``."""
    s = w.sample(z)
    if s.g.ndim == 0:
        return stereographic(complex(s.g))
    return stereographic_array(s.g)


# ---------------------------------------------------------------------------
# parameter grids and paths


@dataclass(frozen=True)
class Segments:
    """A batch of parametrized paths ``z(t)``, ``t in [0, 1]``.

    ``kind == "line"``: ``z = a + t (b - a)``.
    ``kind == "arc"``:  ``z = c + (a - c) exp(i span t)``.
    """

    kind: str
    a: np.ndarray
    b: np.ndarray = None
    c: np.ndarray = None
    span: np.ndarray = None

    def points(self, t):
        t = np.asarray(t)
        a = self.a[:, None]
        if self.kind == "line":
            b = self.b[:, None]
            return a + t[None, :] * (b - a), np.broadcast_to(b - a, (a.shape[0], t.size))
        c = self.c[:, None]
        s = self.span[:, None]
        z = c + (a - c) * np.exp(1j * s * t[None, :])
        return z, 1j * s * (z - c)

    def subset(self, idx) -> "Segments":
        pick = lambda v: None if v is None else v[idx]
        return Segments(self.kind, self.a[idx], pick(self.b), pick(self.c), pick(self.span))

    def __len__(self):
        return self.a.shape[0]


@dataclass(frozen=True)
class PolarGrid:
    """Nodes ``center + r_i exp(i theta_j)``; ``theta`` covers the full circle."""

    radii: np.ndarray
    thetas: np.ndarray
    center: complex = 0j

    @property
    def kind(self):
        return "polar"

    @property
    def shape(self):
        return (self.radii.size, self.thetas.size)

    def nodes(self):
        return self.center + self.radii[:, None] * np.exp(1j * self.thetas[None, :])

    @property
    def cell_size(self):
        dr = np.max(np.diff(self.radii)) if self.radii.size > 1 else 0.0
        return max(dr, float(self.radii.max()) * 2 * np.pi / self.thetas.size)

    def axis_a_segments(self, j):
        z = self.nodes()[:, j]
        return Segments("line", z[:-1], z[1:])

    def axis_b_segments(self, forward=True):
        z = self.nodes()
        n = self.thetas.size
        c = np.full(z[:, 0].shape, self.center)
        dth = 2 * np.pi / n
        span = dth if forward else -dth
        a = z.reshape(-1)
        return Segments("arc", a, None, np.repeat(c, n), np.full(a.size, span))

    def level_values(self):
        return np.log(self.radii)


@dataclass(frozen=True)
class RectGrid:
    """Nodes ``x_i + i y_j`` on a rectangle (strip coordinate)."""

    xs: np.ndarray
    ys: np.ndarray

    @property
    def kind(self):
        return "rect"

    @property
    def shape(self):
        return (self.xs.size, self.ys.size)

    def nodes(self):
        return self.xs[:, None] + 1j * self.ys[None, :]

    @property
    def cell_size(self):
        return max(np.max(np.diff(self.xs)), np.max(np.diff(self.ys)))

    def axis_a_segments(self, j):
        z = self.nodes()[:, j]
        return Segments("line", z[:-1], z[1:])

    def level_values(self):
        return self.xs.copy()


def polar_grid(n_r, n_theta, r_min, r_max, center=0j, spacing="geometric") -> PolarGrid:
    if n_r < 8 or n_theta < 8:
        raise PreconditionError("grid resolution must be at least 8 x 8")
    if not 0 < r_min < r_max:
        raise PreconditionError("need 0 < r_min < r_max")
    if spacing == "geometric":
        radii = np.exp(np.linspace(np.log(r_min), np.log(r_max), n_r))
    elif spacing == "linear":
        radii = np.linspace(r_min, r_max, n_r)
    else:
        raise PreconditionError(f"unknown spacing {spacing!r}")
    thetas = 2 * np.pi * np.arange(n_theta) / n_theta
    return PolarGrid(radii, thetas, complex(center))


def rect_grid(n_x, n_y, x0, x1, y0, y1) -> RectGrid:
    if n_x < 8 or n_y < 8:
        raise PreconditionError("grid resolution must be at least 8 x 8")
    return RectGrid(np.linspace(x0, x1, n_x), np.linspace(y0, y1, n_y))


# ---------------------------------------------------------------------------
# quadrature


def _segment_integrals(w: WeierstrassData, segs: Segments, rtol=1e-10, max_level=12):
    """Integrals of ``(w1, w2, w3)`` along every segment, shape ``(n, 3)``.

    Composite 8-point Gauss-Legendre; each segment is halved until two
    successive refinements agree to ``rtol`` (relative, with an absolute
    floor set by the batch magnitude).
    """

    n = len(segs)
    out = np.full((n, 3), np.nan + 0j)
    if n == 0:
        return out

    def composite(sub: Segments, m):
        t = ((np.arange(m)[:, None] + GL_NODES[None, :]) / m).reshape(-1)
        wts = np.tile(GL_WEIGHTS, m) / m
        z, dz = sub.points(t)
        dens = _omega(w.sample(z))
        return np.einsum("nkc,nk,k->nc", dens, dz, wts)

    todo = np.arange(n)
    m = 1
    prev = composite(segs, m)
    for _ in range(max_level):
        m *= 2
        sub = segs.subset(todo)
        cur = composite(sub, m)
        if np.any(~np.isfinite(cur)) or np.any(np.abs(cur) > 1e12):
            raise QuadratureDivergence("segment integral is not finite or exceeds 1e12")
        diff = np.max(np.abs(cur - prev), axis=1)
        scale = np.max(np.abs(cur), axis=1)
        floor = 1e-15 * max(1.0, float(np.max(scale)))
        ok = diff <= rtol * scale + floor
        out[todo[ok]] = cur[ok]
        todo = todo[~ok]
        prev = cur[~ok]
        if todo.size == 0:
            return out
    raise QuadratureDivergence(f"{todo.size} segment integrals failed to converge")


# ---------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class SurfaceGrid:
    """Samples of an integrated surface on a parameter grid.

    Arrays are indexed ``[i, j]`` with ``i`` along the level-transverse axis
    (radius or ``Re z``) and ``j`` along the levels.  Absent nodes (inside a
    puncture guard) carry NaN.
    """

    grid: object
    z: np.ndarray
    X: np.ndarray
    g: np.ndarray
    lam: np.ndarray
    K: np.ndarray
    present: np.ndarray
    base: tuple
    chart: str
    slab: tuple

    @property
    def shape(self):
        return self.z.shape

    def level_values(self):
        return self.grid.level_values()

    def normalized_height(self, ell):
        lo, hi = self.slab
        return (2 * np.asarray(ell) - (lo + hi)) / (hi - lo)

    def level_from_normalized(self, t):
        lo, hi = self.slab
        return 0.5 * (lo + hi) + 0.5 * t * (hi - lo)


def _guard_mask(w: WeierstrassData, grid, Z, guard):
    present = np.ones(Z.shape, dtype=bool)
    for p in w.punctures:
        if grid.kind == "polar" and abs(grid.center - p) < PUNCTURE_TOL:
            continue  # the grid is a punctured-disc chart around p
        present &= np.abs(Z - p) >= guard
    return present


def integrate_immersion(w: WeierstrassData, grid, base, rtol=1e-10) -> SurfaceGrid:
    """Integrate ``X = X0 + Re int (w1, w2, w3)`` over a parameter grid.

    Paths form a fixed spanning tree: a straight segment from the base point
    to the nearest node, then along axis ``a`` (radial / ``Re z``) through that
    node's column, then along each level (angularly on polar grids, taking
    the shorter way round).  Periods are not folded in; check them with
    :func:`period_check`.
    """
    z0, X0 = complex(base[0]), np.asarray(base[1], dtype=float)
    Z = grid.nodes()
    na, nb = Z.shape
    guard = 2 * grid.cell_size
    present = _guard_mask(w, grid, Z, guard)
    for p in w.punctures:
        if abs(z0 - p) < PUNCTURE_TOL:
            raise PunctureEvaluation("base point lies inside a puncture guard")

    d = np.where(present, np.abs(Z - z0), np.inf)
    i0, j0 = np.unravel_index(np.argmin(d), Z.shape)

    # base segment
    I_base = _segment_integrals(w, Segments("line", np.array([z0]), np.array([Z[i0, j0]])), rtol)[0]

    # trunk along axis a in column j0
    trunk_segs = grid.axis_a_segments(j0)
    valid_t = present[:-1, j0] & present[1:, j0]
    I_trunk = np.full((na - 1, 3), np.nan + 0j)
    if np.any(valid_t):
        I_trunk[valid_t] = _segment_integrals(w, trunk_segs.subset(np.flatnonzero(valid_t)), rtol)
    trunk = np.zeros((na, 3), dtype=complex)
    # cumulative sums outward from i0 in both directions
    trunk[i0 + 1:] = np.cumsum(I_trunk[i0:], axis=0)
    trunk[:i0] = -np.cumsum(I_trunk[:i0][::-1], axis=0)[::-1]

    F = np.full((na, nb, 3), np.nan + 0j)
    if grid.kind == "polar":
        fwd = grid.axis_b_segments(forward=True)
        valid = (present & np.roll(present, -1, axis=1)).reshape(-1)
        I_f = np.full((na * nb, 3), np.nan + 0j)
        if np.any(valid):
            I_f[valid] = _segment_integrals(w, fwd.subset(np.flatnonzero(valid)), rtol)
        I_f = I_f.reshape(na, nb, 3)  # I_f[i, j]: node j -> node j+1 (cyclic)
        half = nb // 2
        for k in range(nb):
            off = (k - j0) % nb
            acc = None
            if off == 0:
                F[:, k] = trunk
                continue
            if off <= half:
                idx = [(j0 + s) % nb for s in range(off)]
                acc = np.sum(I_f[:, idx], axis=1)
                F[:, k] = trunk + acc
            else:
                idx = [(j0 - s - 1) % nb for s in range(nb - off)]
                acc = np.sum(I_f[:, idx], axis=1)
                F[:, k] = trunk - acc
    else:
        zz = Z
        segs = Segments("line", zz[:, :-1].reshape(-1), zz[:, 1:].reshape(-1))
        valid = (present[:, :-1] & present[:, 1:]).reshape(-1)
        I_b = np.full((na * (nb - 1), 3), np.nan + 0j)
        if np.any(valid):
            I_b[valid] = _segment_integrals(w, segs.subset(np.flatnonzero(valid)), rtol)
        I_b = I_b.reshape(na, nb - 1, 3)
        F[:, j0] = trunk
        F[:, j0 + 1:] = trunk[:, None] + np.cumsum(I_b[:, j0:], axis=1)
        F[:, :j0] = trunk[:, None] - np.cumsum(I_b[:, :j0][:, ::-1], axis=1)[:, ::-1]

    X = X0 + np.real(I_base + F)
    X[~present] = np.nan

    g = np.full(Z.shape, np.nan + 0j)
    lam = np.full(Z.shape, np.nan)
    K = np.full(Z.shape, np.nan)
    s = w.sample(Z[present])
    g[present] = s.g
    lam[present] = _lambda(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        Kp = (4 * np.abs(s.dg) / (np.abs(1 - np.abs(s.g) ** 2) ** 2 * np.abs(s.h))) ** 2
    K[present] = np.where(lam[present] > 1e-12, Kp, np.nan)

    lv = grid.level_values()
    return SurfaceGrid(
        grid=grid, z=Z, X=X, g=g, lam=lam, K=K, present=present,
        base=(z0, X0), chart=w.chart, slab=(float(lv.min()), float(lv.max())),
    )


def loop_integrals(w: WeierstrassData, radius, center=None, rtol=1e-12, n_arcs=16):
    """Complex loop integrals of ``(w1, w2, w3)`` over ``|z - center| = radius``."""
    c = w.center if center is None else complex(center)
    if not radius > 0:
        raise PreconditionError("loop radius must be positive")
    if isinstance(w.domain, AnnulusDomain) and c == 0 and not (1 / w.domain.R < radius < w.domain.R):
        raise PreconditionError("loop radius must lie strictly inside (1/R, R)")
    for p in w.punctures:
        if abs(abs(p - c) - radius) < 1e-9:
            raise PunctureOnPath(f"loop |z - {c}| = {radius} passes through puncture {p}")
    th = 2 * np.pi * np.arange(n_arcs) / n_arcs
    a = c + radius * np.exp(1j * th)
    segs = Segments("arc", a, None, np.full(n_arcs, c), np.full(n_arcs, 2 * np.pi / n_arcs))
    return _segment_integrals(w, segs, rtol).sum(axis=0)


def period_check(w: WeierstrassData, radius, center=None):
    """Real parts of the loop integrals; all vanish for a single-valued immersion."""
    I = loop_integrals(w, radius, center)
    return tuple(float(v) for v in I.real)


# ---------------------------------------------------------------------------
# graph equation


@dataclass(frozen=True)
class GraphResidual:
    max_residual: float
    max_grad2: float
    n_points: int


def maximal_graph_operator(zv, h):
    """Central-difference ``(1-zy^2) zxx + 2 zx zy zxy + (1-zx^2) zyy`` on interior nodes.

    ``zv`` is indexed ``[ix, iy]``; returns ``(residual, grad2)`` arrays of shape
    ``(nx-2, ny-2)``.
    """
    z = np.asarray(zv, dtype=float)
    zx = (z[2:, 1:-1] - z[:-2, 1:-1]) / (2 * h)
    zy = (z[1:-1, 2:] - z[1:-1, :-2]) / (2 * h)
    zxx = (z[2:, 1:-1] - 2 * z[1:-1, 1:-1] + z[:-2, 1:-1]) / h ** 2
    zyy = (z[1:-1, 2:] - 2 * z[1:-1, 1:-1] + z[1:-1, :-2]) / h ** 2
    zxy = (z[2:, 2:] - z[2:, :-2] - z[:-2, 2:] + z[:-2, :-2]) / (4 * h ** 2)
    res = (1 - zy ** 2) * zxx + 2 * zx * zy * zxy + (1 - zx ** 2) * zyy
    return res, zx ** 2 + zy ** 2


def graph_residual_samples(zv, h) -> GraphResidual:
    """Residual of the maximal graph equation for samples on a uniform planar grid."""
    res, g2 = maximal_graph_operator(zv, h)
    ok = np.isfinite(res)
    if not np.any(ok):
        raise PreconditionError("no complete stencils in sample")
    out = GraphResidual(float(np.max(np.abs(res[ok]))), float(np.max(g2[ok])), int(ok.sum()))
    if out.max_grad2 >= 1:
        raise SpacelikeViolation(f"max |Dz|^2 = {out.max_grad2} >= 1")
    return out


def _param_axes(surface: SurfaceGrid):
    grid = surface.grid
    if grid.kind == "polar":
        return np.log(grid.radii), grid.thetas
    return grid.xs, grid.ys


def graph_residual(surface: SurfaceGrid, h, bbox=None, newton_iter=30) -> GraphResidual:
    """Resample ``X3`` over the ``x1 x2``-plane and evaluate the graph residual.

    The surface is interpolated by quintic splines in parameter space, each
    planar target point is pulled back by Newton iteration, and the quasilinear
    operator is applied by central differences with spacing ``h``.
    """
    if not np.all(surface.present):
        raise PreconditionError("graph_residual needs a patch without absent nodes")
    a, b = _param_axes(surface)
    X = surface.X
    periodic = surface.grid.kind == "polar"
    if periodic:
        pad = 6
        b_ext = np.concatenate([b[-pad:] - 2 * np.pi, b, b[:pad] + 2 * np.pi])
        Xe = np.concatenate([X[:, -pad:], X, X[:, :pad]], axis=1)
    else:
        b_ext, Xe = b, X
    spl = [interpolate.RectBivariateSpline(a, b_ext, Xe[:, :, k], kx=5, ky=5) for k in range(3)]

    # fold check: Jacobian of the planar projection must keep its sign
    J = spl[0](a, b, dx=1) * spl[1](a, b, dy=1) - spl[0](a, b, dy=1) * spl[1](a, b, dx=1)
    scale = np.max(np.abs(J))
    if np.any(J > 1e-9 * scale) and np.any(J < -1e-9 * scale):
        raise NotAGraph("vertical projection changes orientation (the patch folds)")

    pts = X[..., :2].reshape(-1, 2)
    if bbox is None:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
    else:
        lo, hi = np.asarray(bbox[0], float), np.asarray(bbox[1], float)
    xs = np.arange(lo[0], hi[0] + 0.5 * h, h)
    ys = np.arange(lo[1], hi[1] + 0.5 * h, h)
    TX, TY = np.meshgrid(xs, ys, indexing="ij")
    tgt = np.stack([TX.ravel(), TY.ravel()], axis=1)

    tree = spatial.cKDTree(pts)
    _, nearest = tree.query(tgt)
    ia, ib = np.unravel_index(nearest, X.shape[:2])
    pa, pb = a[ia].astype(float), b[ib].astype(float)
    for _ in range(newton_iter):
        f1 = spl[0].ev(pa, pb) - tgt[:, 0]
        f2 = spl[1].ev(pa, pb) - tgt[:, 1]
        j11, j12 = spl[0].ev(pa, pb, dx=1), spl[0].ev(pa, pb, dy=1)
        j21, j22 = spl[1].ev(pa, pb, dx=1), spl[1].ev(pa, pb, dy=1)
        det = j11 * j22 - j12 * j21
        with np.errstate(divide="ignore", invalid="ignore"):
            da = (j22 * f1 - j12 * f2) / det
            db = (-j21 * f1 + j11 * f2) / det
        pa, pb = pa - da, pb - db
    f1 = spl[0].ev(pa, pb) - tgt[:, 0]
    f2 = spl[1].ev(pa, pb) - tgt[:, 1]
    inside = (pa >= a[0]) & (pa <= a[-1])
    if not periodic:
        inside &= (pb >= b[0]) & (pb <= b[-1])
    ok = inside & (np.hypot(f1, f2) < 1e-11) & np.isfinite(pa)
    zv = np.where(ok, spl[2].ev(pa, pb), np.nan).reshape(TX.shape)
    return graph_residual_samples(zv, h)


# ---------------------------------------------------------------------------
# conelike singularities


@dataclass(frozen=True)
class ConeCandidate:
    nodes: np.ndarray  # (k, 2) grid indices
    P0: np.ndarray
    spread: float


def detect_conelike(surface: SurfaceGrid, tol) -> list:
    """Grid sets where ``lambda < tol`` and ``|g|`` crosses 1.

    Each candidate reports ``P0`` (mean image point) and ``spread`` (the
    diameter of the image of the set); a genuine cone point has spread
    tending to zero under refinement.
    """
    if not tol > 0:
        raise PreconditionError("tol must be positive")
    m = np.abs(surface.g) - 1.0
    small = surface.lam < tol
    mask = np.zeros(surface.shape, dtype=bool)
    mask |= (m == 0) & small
    cross_a = (m[:-1] * m[1:] < 0) & small[:-1] & small[1:]
    mask[:-1] |= cross_a
    mask[1:] |= cross_a
    periodic = surface.grid.kind == "polar"
    mb = np.roll(m, -1, axis=1) if periodic else m[:, 1:]
    sb = np.roll(small, -1, axis=1) if periodic else small[:, 1:]
    mm = m if periodic else m[:, :-1]
    ss = small if periodic else small[:, :-1]
    cross_b = (mm * mb < 0) & ss & sb
    if periodic:
        mask |= cross_b
        mask |= np.roll(cross_b, 1, axis=1)
    else:
        mask[:, :-1] |= cross_b
        mask[:, 1:] |= cross_b

    labels, n = ndimage.label(mask, structure=np.ones((3, 3)))
    if periodic and n:
        parent = list(range(n + 1))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i in range(labels.shape[0]):
            for di in (-1, 0, 1):
                k = i + di
                if 0 <= k < labels.shape[0]:
                    u, v = labels[i, -1], labels[k, 0]
                    if u and v:
                        parent[find(u)] = find(v)
        roots = np.array([find(x) for x in range(n + 1)])
        labels = roots[labels]

    out = []
    for lab in sorted(set(np.unique(labels)) - {0}):
        idx = np.argwhere(labels == lab)
        P = surface.X[idx[:, 0], idx[:, 1]]
        P = P[np.all(np.isfinite(P), axis=1)]
        if len(P) == 0:
            continue
        spread = float(np.max(spatial.distance.pdist(P))) if len(P) > 1 else 0.0
        out.append(ConeCandidate(nodes=idx, P0=P.mean(axis=0), spread=spread))
    return out


# ---------------------------------------------------------------------------
# mirror reflection about a cone circle


def mirror_reflect(w: WeierstrassData, tol=1e-9, n_check=512) -> WeierstrassData:
    """Mirror data across ``|z| = 1``: ``g*(z) = 1/conj(g(J z))``,
    ``h*(z) = conj(g(J z)^2 h(J z)) / z^2`` with ``J z = 1/conj(z)``.

    The integrated surfaces satisfy ``X*(z) = -X(J z) + 2 P0`` when the base
    points are related by :func:`mirror_base`.
    """
    th = 2 * np.pi * (np.arange(n_check) + 0.5) / n_check
    g_c, _, _ = w.gauss(np.exp(1j * th))
    dev = float(np.max(np.abs(np.abs(g_c) - 1)))
    if dev > tol:
        raise NotAConeCircle(f"| |g| - 1 | reaches {dev:.3e} on the unit circle")

    def J(z):
        return 1.0 / np.conj(z)

    def gauss(z):
        z = np.asarray(z, dtype=complex)
        g, dg, d2g = w.gauss(J(z))
        q = np.conj(g)
        dq = -np.conj(dg) / z ** 2
        gs = 1.0 / q
        dgs = -dq / q ** 2
        if d2g is None:
            d2gs = None
        else:
            d2q = np.conj(d2g) / z ** 4 + 2 * np.conj(dg) / z ** 3
            d2gs = -d2q / q ** 2 + 2 * dq ** 2 / q ** 3
        return gs, dgs, d2gs

    def eta(z, _g):
        z = np.asarray(z, dtype=complex)
        zj = J(z)
        g, _, _ = w.gauss(zj)
        h = w.eta(zj, g)
        return np.conj(g * g * h) / z ** 2

    dom = w.domain
    if isinstance(dom, AnnulusDomain):
        dom = AnnulusDomain(
            dom.R,
            tuple(1 / np.conj(p) for p in dom.punctures),
            None if dom.end_puncture is None else 1 / np.conj(dom.end_puncture),
        )
    return replace(w, gauss=gauss, eta=eta, domain=dom, label=(w.label + "*") if w.label else "mirror")


def mirror_base(base, P0):
    """Base point of the mirror surface: ``(J z0, -X0 + 2 P0)``."""
    z0, X0 = base
    return 1 / np.conj(complex(z0)), -np.asarray(X0, float) + 2 * np.asarray(P0, float)


# ---------------------------------------------------------------------------
# end asymptotics


@dataclass(frozen=True)
class EndFit:
    alpha: float
    beta: float
    t0: float
    kind: str
    orientation: int
    residual: float
    n_rings: int


def fit_end_asymptotics(surface: SurfaceGrid, puncture, rho_max=0.1, planar_ratio=1e-3) -> EndFit:
    """Least-squares fit of ``alpha/rho e^{+-i theta}`` and ``t0 + beta log rho`` near an end.

    ``surface`` must be sampled on a polar grid centered at the puncture
    (local coordinate ``rho e^{i theta}``).  The in-plane fit carries both
    orientations plus ``O(rho)`` corrections; the height fit carries
    ``rho cos``/``rho sin`` corrections.  ``alpha`` depends on the chart.
    """
    grid = surface.grid
    if grid.kind != "polar" or abs(grid.center - complex(puncture)) > 1e-12:
        raise InsufficientRings("end fit needs a polar grid centered at the puncture")
    rings = np.flatnonzero(grid.radii <= rho_max)
    rings = [i for i in rings if np.all(surface.present[i])]
    if len(rings) < 3:
        raise InsufficientRings(f"only {len(rings)} complete rings within rho <= {rho_max}")
    rho = np.repeat(grid.radii[rings], grid.thetas.size)
    th = np.tile(grid.thetas, len(rings))
    X = surface.X[rings].reshape(-1, 3)
    e = np.exp(1j * th)
    A = np.stack([np.ones_like(e), e / rho, np.conj(e) / rho, rho * e, rho * np.conj(e)], axis=1)
    zc = X[:, 0] + 1j * X[:, 1]
    cc, *_ = np.linalg.lstsq(A, zc, rcond=None)
    B = np.stack([np.ones_like(rho), np.log(rho), rho * np.cos(th), rho * np.sin(th)], axis=1)
    cb, *_ = np.linalg.lstsq(B, X[:, 2], rcond=None)
    res = np.sqrt(np.mean(np.abs(A @ cc - zc) ** 2) + np.mean((B @ cb - X[:, 2]) ** 2))
    if abs(cc[1]) >= abs(cc[2]):
        alpha, orient = abs(cc[1]), 1
    else:
        alpha, orient = abs(cc[2]), -1
    beta, t0 = float(cb[1]), float(cb[0])
    kind = "planar" if abs(beta) < planar_ratio * alpha else "catenoidal"
    return EndFit(float(alpha), beta, t0, kind, orient, float(res), len(rings))
