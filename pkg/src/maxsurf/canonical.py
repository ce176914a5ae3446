"""Lorentzian catenoids and Riemann examples as :class:`WeierstrassData`.

The catenoid is explicit.  Riemann examples have a Gauss map defined only
through ``(g')^2 = g (g^2 + 2 r g + 1)`` in the strip coordinate; it is
continued numerically from a base value by adaptive RK4 along fixed path
families, with the square-root branch chosen by continuity of ``g'``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import BranchCollision, PreconditionError, StepUnderflow
from .weierstrass import (
    AnnulusDomain,
    RectDomain,
    Segments,
    WeierstrassData,
    integrate_immersion,
    polar_grid,
)

log = logging.getLogger(__name__)

DEFAULT_RECT = (-0.6, 0.6, -math.pi / 2, math.pi / 2)


# ---------------------------------------------------------------------------
# catenoid


def make_catenoid(scale: float = 1.0, R: float = 4.0) -> WeierstrassData:
    """Catenoid data ``g = z``, ``eta = s dz / z^2`` on ``1/R <= |z| <= R``.

    Integrates to ``X = (s/2)((r - 1/r) cos t, (r - 1/r) sin t, 2 log r)``
    from the base point ``(1, 0)``; the unit circle maps to the cone point.
    """
    if not scale > 0:
        raise PreconditionError("scale must be positive")
    s = float(scale)
    return WeierstrassData.closed_form(
        g=lambda z: z,
        dg=lambda z: np.ones_like(z),
        d2g=lambda z: np.zeros_like(z),
        h=lambda z: s / z ** 2,
        domain=AnnulusDomain(R),
        chart="annulus",
        label="catenoid",
        params={"kind": "catenoid", "scale": s, "R": R},
    )


def catenoid_end_chart(scale: float = 1.0) -> WeierstrassData:
    """The catenoid in the chart ``w = 1/z`` around its end at infinity."""
    s = float(scale)
    return WeierstrassData.closed_form(
        g=lambda w: 1 / w,
        dg=lambda w: -1 / w ** 2,
        d2g=lambda w: 2 / w ** 3,
        h=lambda w: -s * np.ones_like(w),
        domain=None,
        chart="annulus",
        label="catenoid-end",
        params={"kind": "catenoid-end", "scale": s},
    )


def catenoid_point(r, theta, scale=1.0):
    """Closed-form catenoid point at ``z = r e^{i theta}``."""
    r = np.asarray(r, float)
    rad = 0.5 * scale * (r - 1 / r)
    return np.stack(np.broadcast_arrays(rad * np.cos(theta), rad * np.sin(theta), scale * np.log(r)), axis=-1)


def closed_form_catenoid_graph(x, y, scale=1.0):
    """Upper sheet of the catenoid as a graph, ``s asinh(sqrt(x^2+y^2)/s)``."""
    if not scale > 0:
        raise PreconditionError("scale must be positive")
    return scale * np.arcsinh(np.hypot(x, y) / scale)


# ---------------------------------------------------------------------------
# Riemann examples


@dataclass(frozen=True)
class RiemannParameter:
    r: float
    g0: complex = 1.0
    branch: int = 1

    def __post_init__(self):
        if self.branch not in (1, -1):
            raise PreconditionError("branch must be +1 or -1")
        if not math.isfinite(self.r):
            raise PreconditionError("r must be finite")
        if abs(riemann_rhs(complex(self.g0), self.r)) < 1e-10:
            raise PreconditionError(f"g0 = {self.g0} is a root of the ODE right-hand side")

    @property
    def slope0(self) -> complex:
        return self.branch * np.sqrt(complex(riemann_rhs(complex(self.g0), self.r)))


def riemann_rhs(g, r):
    return g * (g * g + 2 * r * g + 1)


def _nearest_root(f, ref):
    q = np.sqrt(f)
    return np.where(np.abs(q - ref) <= np.abs(q + ref), q, -q)


@dataclass
class _State:
    y: np.ndarray  # g, or 1/g where inv
    p: np.ndarray  # derivative of y wrt z
    inv: np.ndarray

    def copy(self):
        return _State(self.y.copy(), self.p.copy(), self.inv.copy())

    def take(self, idx):
        return _State(self.y[idx].copy(), self.p[idx].copy(), self.inv[idx].copy())

    def g_and_dg(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(self.inv, 1 / self.y, self.y)
            dg = np.where(self.inv, -self.p / self.y ** 2, self.p)
        return g, dg


class RiemannGaussMap:
    """Numerical continuation of a Riemann-example Gauss map.

    The same ODE holds for ``G = 1/g`` (with ``G' = -g'/g^2``), so whenever
    ``|y| > 2`` the marcher swaps representation; paths can then pass near
    the poles of ``g``.  Steps are shared by a whole batch of paths and
    controlled by step doubling with local extrapolation.
    """

    def __init__(self, param: RiemannParameter, z0=0j, rtol=1e-12, h0=0.02, path_order="real-first"):
        if path_order not in ("real-first", "imag-first"):
            raise PreconditionError(f"unknown path order {path_order!r}")
        self.param = param
        self.z0 = complex(z0)
        self.rtol = rtol
        self.h0 = h0
        self.path_order = path_order
        self.n_steps = 0

    # -- core marcher -----------------------------------------------------

    def _rhs(self, y, ref, dz):
        f = riemann_rhs(y, self.param.r)
        if np.any(np.abs(f) < 1e-10):
            raise BranchCollision("path meets a root of g (g^2 + 2 r g + 1)")
        q = _nearest_root(f, ref)
        return q * dz, q

    def _rk4(self, segs: Segments, t, dt, st: _State):
        _, d1 = segs.points(np.array([t]))
        _, d2 = segs.points(np.array([t + dt / 2]))
        _, d3 = segs.points(np.array([t + dt]))
        d1, d2, d3 = d1[:, 0], d2[:, 0], d3[:, 0]
        k1, q1 = self._rhs(st.y, st.p, d1)
        k2, q2 = self._rhs(st.y + 0.5 * dt * k1, q1, d2)
        k3, q3 = self._rhs(st.y + 0.5 * dt * k2, q2, d2)
        k4, _ = self._rhs(st.y + dt * k3, q3, d3)
        return st.y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def march(self, segs: Segments, st: _State, stops):
        """Advance every path of ``segs`` from ``t = 0`` through the sorted ``stops``.

        Returns the list of states at the stops.
        """
        st = st.copy()
        stops = np.asarray(stops, float)
        out = []
        n = len(segs)
        if n == 0:
            return [st.copy() for _ in stops]
        # scale the step to physical length
        _, dz = segs.points(np.array([0.0]))
        speed = float(np.max(np.abs(dz))) or 1.0
        dt_ad = self.h0 / speed
        t = 0.0
        for ts in stops:
            while t < ts - 1e-15:
                dt = min(dt_ad, ts - t)
                if dt * speed < 1e-12:
                    raise StepUnderflow("adaptive step fell below 1e-12")
                if dt <= 0.5 * dt_ad:
                    # clipped by a stop well below the controlled step: no estimate needed
                    y = self._rk4(segs, t, dt, st)
                    st = self._accept(y, st.p, st.inv)
                    t += dt
                    continue
                full = self._rk4(segs, t, dt, st)
                mid_y = self._rk4(segs, t, dt / 2, st)
                mid_p = _nearest_root(riemann_rhs(mid_y, self.param.r), st.p)
                half = self._rk4(segs, t + dt / 2, dt / 2, _State(mid_y, mid_p, st.inv))
                err = np.max(np.abs(half - full) / np.maximum(1.0, np.abs(half)))
                if not np.isfinite(err):
                    raise StepUnderflow("non-finite state during continuation")
                fac = 2.0 if err == 0 else min(2.0, 0.9 * (15 * self.rtol / err) ** 0.2)
                if err <= 15 * self.rtol:
                    st = self._accept(half + (half - full) / 15, mid_p, st.inv)
                    t += dt
                    if dt == dt_ad or fac < 1:
                        dt_ad = dt * max(fac, 0.2)
                else:
                    dt_ad = dt * max(0.2, fac)
            out.append(st.copy())
        return out

    def _accept(self, y, pref, inv) -> _State:
        p = _nearest_root(riemann_rhs(y, self.param.r), pref)
        flip = np.abs(y) > 2
        if np.any(flip):
            p = np.where(flip, -p / y ** 2, p)
            y = np.where(flip, 1 / y, y)
        self.n_steps += 1
        return _State(y, p, inv ^ flip)

    def _start(self, n=1) -> _State:
        g0 = complex(self.param.g0)
        p0 = self.param.slope0
        if abs(g0) > 2:
            y0, pp0, inv = 1 / g0, -p0 / g0 ** 2, True
        else:
            y0, pp0, inv = g0, p0, False
        return _State(np.full(n, y0, complex), np.full(n, pp0, complex), np.full(n, inv))

    def _line_stops(self, st: _State, a: complex, direction: complex, lengths):
        """March once from ``a`` along ``direction`` to the given (signed) lengths."""
        lengths = np.asarray(lengths, float)
        res = [None] * lengths.size
        for sign in (1, -1):
            sel = np.flatnonzero(sign * lengths > 0)
            if sel.size == 0:
                continue
            order = sel[np.argsort(sign * lengths[sel])]
            ts = sign * lengths[order]
            segs = Segments("line", np.array([a]), np.array([a + sign * direction]))
            states = self.march(segs, st, ts)
            for k, s in zip(order, states):
                res[k] = s
        for k in np.flatnonzero(lengths == 0):
            res[k] = st.copy()
        return res

    # -- evaluation ---------------------------------------------------------

    def on_tensor_grid(self, xs, ys):
        """``(g, g')`` on ``xs[:, None] + i ys[None, :]`` (real-first paths)."""
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        z0 = self.z0
        trunk = self._line_stops(self._start(), z0, 1.0 + 0j, xs - z0.real)
        base = _State(
            np.concatenate([s.y for s in trunk]),
            np.concatenate([s.p for s in trunk]),
            np.concatenate([s.inv for s in trunk]),
        )
        a = xs + 1j * z0.imag
        G = np.empty((xs.size, ys.size), complex)
        D = np.empty_like(G)
        dy = ys - z0.imag
        for sign in (1, -1):
            sel = np.flatnonzero(sign * dy > 0)
            if sel.size:
                order = sel[np.argsort(sign * dy[sel])]
                segs = Segments("line", a, a + sign * 1j)
                states = self.march(segs, base, sign * dy[order])
                for k, s in zip(order, states):
                    G[:, k], D[:, k] = s.g_and_dg()
        for k in np.flatnonzero(dy == 0):
            G[:, k], D[:, k] = base.g_and_dg()
        return G, D

    def two_leg(self, z, order=None):
        """``(g, g')`` at arbitrary points via two axis-parallel legs."""
        order = order or self.path_order
        z = np.asarray(z, complex).ravel()
        z0 = self.z0
        if order == "real-first":
            leg1 = z.real - z0.real
            dir1, dir2 = 1.0 + 0j, 1j
            corner = z.real + 1j * z0.imag
            leg2 = z.imag - z0.imag
        else:
            leg1 = z.imag - z0.imag
            dir1, dir2 = 1j, 1.0 + 0j
            corner = z0.real + 1j * z.imag
            leg2 = z.real - z0.real
        u1, inv1 = np.unique(leg1, return_inverse=True)
        st1 = self._line_stops(self._start(), z0, dir1, u1)
        base = _State(
            np.concatenate([st1[k].y for k in inv1]),
            np.concatenate([st1[k].p for k in inv1]),
            np.concatenate([st1[k].inv for k in inv1]),
        )
        segs = Segments("line", corner, corner + dir2 * leg2)
        moving = np.flatnonzero(leg2 != 0)
        final = base.copy()
        if moving.size:
            s = self.march(segs.subset(moving), base.take(moving), [1.0])[0]
            final.y[moving], final.p[moving], final.inv[moving] = s.y, s.p, s.inv
        return final.g_and_dg()

    def hub(self, w_e, rho0, zeta):
        """``(g, g')`` at ``w_e + zeta`` via the real axis, an arc of radius
        ``rho0`` about ``w_e`` and a radial leg; used around an end."""
        zeta = np.asarray(zeta, complex).ravel()
        z0 = self.z0
        w_e = complex(w_e)
        start = w_e - rho0 if w_e.real > z0.real else w_e + rho0
        st = self._line_stops(self._start(), z0, (start - z0) / abs(start - z0), [abs(start - z0)])[0]
        ang0 = np.angle(start - w_e)
        phi = np.angle(zeta)
        span = np.angle(np.exp(1j * (phi - ang0)))
        n = zeta.size
        base = _State(np.repeat(st.y, n), np.repeat(st.p, n), np.repeat(st.inv, n))
        arc = Segments("arc", np.full(n, start), None, np.full(n, w_e), span)
        mid = self.march(arc, base, [1.0])[0]
        a = w_e + rho0 * np.exp(1j * phi)
        rad = Segments("line", a, w_e + zeta)
        moving = np.flatnonzero(np.abs(zeta) != rho0)
        final = mid.copy()
        if moving.size:
            s = self.march(rad.subset(moving), mid.take(moving), [1.0])[0]
            final.y[moving], final.p[moving], final.inv[moving] = s.y, s.p, s.inv
        return final.g_and_dg()


def _riemann_derivs(g, dg, r):
    """Exact ``g'`` (nearest ODE root to the continued one) and ``g''``."""
    f = riemann_rhs(g, r)
    with np.errstate(invalid="ignore"):
        d1 = _nearest_root(f, dg)
    return d1, 0.5 * (3 * g * g + 4 * r * g + 1)


def make_riemann(param: RiemannParameter, rect=DEFAULT_RECT, z0=0j, rtol=1e-12, path_order="real-first") -> WeierstrassData:
    """Riemann example on a rectangle of the strip coordinate; ``eta = dz / g``.

    The height is ``X3 = Re z`` so levels are vertical lines.  Gauss-map
    values are produced on demand by :class:`RiemannGaussMap`.  Point sets
    close to a tensor product of their distinct real and imaginary parts
    (grid nodes, quadrature nodes on grid edges) are evaluated with a single
    trunk march plus parallel vertical marches.
    """
    x0, x1, y0, y1 = rect
    dom = RectDomain(x0, x1, y0, y1)
    z0 = complex(z0)
    if not (x0 <= z0.real <= x1 and y0 <= z0.imag <= y1):
        raise PreconditionError("base point must lie in the rectangle")
    gm = RiemannGaussMap(param, z0=z0, rtol=rtol, path_order=path_order)
    r = param.r

    def gauss(z):
        z = np.asarray(z, complex)
        flat = z.reshape(-1)
        ux, ix = np.unique(flat.real, return_inverse=True)
        uy, iy = np.unique(flat.imag, return_inverse=True)
        if ux.size * uy.size <= 4 * flat.size:
            G, D = gm.on_tensor_grid(ux, uy)
            g, dg = G[ix, iy], D[ix, iy]
        else:
            g, dg = gm.two_leg(flat)
        g, dg = g.reshape(z.shape), dg.reshape(z.shape)
        d1, d2 = _riemann_derivs(g, dg, r)
        return g, d1, d2

    def eta(z, g):
        return 1.0 / np.asarray(g)

    return WeierstrassData(
        gauss=gauss, eta=eta, domain=dom, chart="strip", label="riemann",
        params={"kind": "riemann", "r": r, "g0": [complex(param.g0).real, complex(param.g0).imag],
                "branch": param.branch, "rect": list(rect), "z0": [z0.real, z0.imag]},
    )


def riemann_real_pole(param: RiemannParameter, z0=0j) -> complex:
    """Location of the first pole of ``g`` on the ray ``z0 + t``, ``t > 0``.

    Requires real ``g0 > 0`` and ``branch = +1``, so that ``g`` increases
    to infinity along the real axis; computed as the improper integral of
    ``dg / sqrt(g (g^2 + 2 r g + 1))``.
    """
    g0 = complex(param.g0)
    if g0.imag != 0 or g0.real <= 0 or param.branch != 1:
        raise PreconditionError("real pole search needs real g0 > 0 and branch +1")
    if param.r <= -1:
        raise PreconditionError("right-hand side must stay positive for g > g0")
    r = param.r
    val, _ = integrate.quad(lambda g: 1 / math.sqrt(g * (g * g + 2 * r * g + 1)), g0.real, math.inf,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
    return complex(z0) + val


def riemann_end_data(param: RiemannParameter, z0=0j, hub_radius=0.3, rtol=1e-12) -> tuple:
    """Riemann data in the local coordinate ``zeta = z - w_e`` around the real pole.

    Returns ``(data, w_e)``; ``data`` is punctured at ``zeta = 0``.
    """
    w_e = riemann_real_pole(param, z0)
    gm = RiemannGaussMap(param, z0=z0, rtol=rtol)
    r = param.r

    def gauss(zeta):
        zeta = np.asarray(zeta, complex)
        g, dg = gm.hub(w_e, hub_radius, zeta)
        g, dg = g.reshape(zeta.shape), dg.reshape(zeta.shape)
        d1, d2 = _riemann_derivs(g, dg, r)
        return g, d1, d2

    def eta(zeta, g):
        return 1.0 / np.asarray(g)

    class _EndDomain:
        all_punctures = (0j,)

    return (
        WeierstrassData(gauss=gauss, eta=eta, domain=_EndDomain(), chart="strip", label="riemann-end",
                        params={"kind": "riemann-end", "r": r, "w_e": [w_e.real, w_e.imag]}),
        w_e,
    )


def riemann_end_surface(param: RiemannParameter, n_rho=12, n_theta=48, rho_min=0.02, rho_max=0.1, z0=0j):
    """Integrated annular patch around the planar end of a Riemann example."""
    data, w_e = riemann_end_data(param, z0)
    grid = polar_grid(n_rho, n_theta, rho_min, rho_max, center=0j)
    base = (complex(rho_max), np.array([0.0, 0.0, w_e.real + rho_max]))
    return integrate_immersion(data, grid, base), w_e
