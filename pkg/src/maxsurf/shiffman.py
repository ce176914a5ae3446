"""Level-curve curvature and the Lorentzian Shiffman function.

With ``F = zeta g'/g`` (annulus chart, ``zeta = z - center``) or ``F = g'/g``
(strip chart) and ``D`` the matching derivation (``zeta d/dz`` or ``d/dz``),

    kappa = Re F / Lc,      u = Im[ (|g|^2 + 1) / (2 (|g|^2 - 1)) F^2 - D F ],

where ``Lc`` is the conformal factor in the logarithmic chart (``|zeta| lambda``
on annuli, ``lambda`` on strips).  ``u = Lc d kappa / d phi`` with ``phi`` the
coordinate along levels, and ``u`` solves the Jacobi equation
``Lc^-2 Delta u = 2 K u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GridTooCoarse, PreconditionError, SingularPoint
from .weierstrass import PolarGrid, RectGrid, WeierstrassData, _lambda

LAMBDA_TOL = 1e-10
UNIT_TOL = 1e-10


def _chart_terms(w: WeierstrassData, z):
    """``(sample, F, DF, Lc)`` at ``z``."""
    s = w.sample(z)
    if s.d2g is None:
        raise PreconditionError("second derivative of g is required")
    L = _lambda(s)
    q = s.dg / s.g
    dq = s.d2g / s.g - q * q
    if w.chart == "annulus":
        zeta = np.asarray(z, complex) - w.center
        F = zeta * q
        DF = zeta * (q + zeta * dq)
        Lc = np.abs(zeta) * L
    else:
        F, DF, Lc = q, dq, L
    return s, F, DF, Lc


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def level_curvature(w: WeierstrassData, z):
    """Planar curvature of the level curve through ``X(z)``."""
    s, F, _, Lc = _chart_terms(w, z)
    if np.any(_lambda(s) <= LAMBDA_TOL):
        raise SingularPoint("level curvature needs a regular metric")
    return _scalar(F.real / Lc)


def _u_from(s, F, DF):
    m2 = np.abs(s.g) ** 2
    return np.imag(0.5 * (m2 + 1) / (m2 - 1) * F * F - DF)


def shiffman_u(w: WeierstrassData, z):
    s, F, DF, _ = _chart_terms(w, z)
    if np.any(np.abs(np.abs(s.g) - 1) <= UNIT_TOL):
        raise SingularPoint("Shiffman function is undefined on |g| = 1")
    return _scalar(_u_from(s, F, DF))


def cone_function(w: WeierstrassData, z):
    """``Im[(g'/g)^2 / |g^2 - 1|]``, bounded up to a cone-point circle."""
    s = w.sample(z)
    return _scalar(np.imag((s.dg / s.g) ** 2) / np.abs(s.g ** 2 - 1))


# ---------------------------------------------------------------------------
# fields on grids


@dataclass(frozen=True)
class ShiffmanField:
    """Shiffman data on a grid that is uniform in the logarithmic chart.

    Arrays are indexed ``[i, j]`` (level-transverse, along-level).  Nodes in
    the guard band around ``|g| = 1`` or with a degenerate metric hold NaN
    in ``u`` and ``kappa``.
    """

    z: np.ndarray
    u: np.ndarray
    kappa: np.ndarray
    h: np.ndarray
    lam: np.ndarray
    lam_chart: np.ndarray
    K: np.ndarray
    spacing: tuple
    periodic: bool
    grid: object

    @property
    def max_abs_u(self) -> float:
        return float(np.nanmax(np.abs(self.u)))


def _chart_axes(grid, w):
    if isinstance(grid, PolarGrid):
        if abs(grid.center - w.center) > 1e-14 or w.chart != "annulus":
            raise PreconditionError("polar grids need annulus data with the same center")
        la = np.log(grid.radii)
        return la, grid.thetas, True
    if isinstance(grid, RectGrid):
        if w.chart != "strip":
            raise PreconditionError("rectangular grids need strip-chart data")
        return grid.xs, grid.ys, False
    raise PreconditionError("unsupported grid")


def _uniform_step(v, name):
    d = np.diff(v)
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise PreconditionError(f"{name} spacing must be uniform in the chart")
    return float(d[0])


def shiffman_field(w: WeierstrassData, grid, guard_cells=2) -> ShiffmanField:
    a, b, periodic = _chart_axes(grid, w)
    ha, hb = _uniform_step(a, "transverse"), _uniform_step(b, "level")
    Z = grid.nodes()
    s, F, DF, Lc = _chart_terms(w, Z)
    lam = _lambda(s)
    m = np.abs(s.g) - 1
    sing = np.abs(m) <= UNIT_TOL
    sing[:-1] |= m[:-1] * m[1:] < 0
    sing[1:] |= m[:-1] * m[1:] < 0
    if periodic:
        c = m * np.roll(m, -1, axis=1) < 0
        sing |= c | np.roll(c, 1, axis=1)
    else:
        c = m[:, :-1] * m[:, 1:] < 0
        sing[:, :-1] |= c
        sing[:, 1:] |= c
    if guard_cells > 0 and np.any(sing):
        st = np.ones((2 * guard_cells + 1, 2 * guard_cells + 1), bool)
        if periodic:
            sing = ndimage.binary_dilation(np.pad(sing, ((0, 0), (guard_cells, guard_cells)), mode="wrap"), st)[
                :, guard_cells:-guard_cells]
        else:
            sing = ndimage.binary_dilation(sing, st)
    bad = sing | (lam <= LAMBDA_TOL)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(bad, np.nan, _u_from(s, F, DF))
        kappa = np.where(bad, np.nan, F.real / Lc)
        K = np.where(bad, np.nan, (4 * np.abs(s.dg) / (np.abs(1 - np.abs(s.g) ** 2) ** 2 * np.abs(s.h))) ** 2)
    return ShiffmanField(Z, u, kappa, F.real, lam, np.where(bad, np.nan, Lc), K, (ha, hb), periodic, grid)


def _laplacian(f, ha, hb, periodic):
    """5-point Laplacian on interior nodes (NaN where a stencil is incomplete)."""
    out = np.full(f.shape, np.nan)
    if periodic:
        fb = (np.roll(f, -1, axis=1) - 2 * f + np.roll(f, 1, axis=1)) / hb ** 2
        out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / ha ** 2 + fb[1:-1]
    else:
        out[1:-1, 1:-1] = (f[2:, 1:-1] - 2 * f[1:-1, 1:-1] + f[:-2, 1:-1]) / ha ** 2 + (
            f[1:-1, 2:] - 2 * f[1:-1, 1:-1] + f[1:-1, :-2]) / hb ** 2
    return out


def _require_interior(shape, periodic):
    ni = shape[0] - 2
    nj = shape[1] if periodic else shape[1] - 2
    if ni < 16 or nj < 16:
        raise GridTooCoarse(f"need at least 16 x 16 interior nodes, have {ni} x {nj}")


def jacobi_residual(field: ShiffmanField) -> float:
    """``max |Delta u - 2 K Lc^2 u|`` over interior nodes with complete stencils."""
    _require_interior(field.u.shape, field.periodic)
    ha, hb = field.spacing
    r = _laplacian(field.u, ha, hb, field.periodic) - 2 * field.K * field.lam_chart ** 2 * field.u
    if not np.any(np.isfinite(r)):
        raise GridTooCoarse("no complete stencils outside the guard band")
    return float(np.nanmax(np.abs(r)))


def field_jacobi_residual(u, K, lam_chart, spacing, periodic=False) -> float:
    """Jacobi residual for raw arrays (synthetic test fields)."""
    u = np.asarray(u, float)
    _require_interior(u.shape, periodic)
    r = _laplacian(u, *spacing, periodic) - 2 * np.asarray(K) * np.asarray(lam_chart) ** 2 * u
    return float(np.nanmax(np.abs(r)))


def _winding(vals):
    d = np.angle(vals[1:] / vals[:-1])
    return float(np.sum(d)) / (2 * np.pi)


def zero_pole_scan(w: WeierstrassData, grid, tiny=1e-8) -> None:
    """Refuse data whose Gauss map has an interior zero or pole on the grid region.

    Uses the argument principle along the grid boundary plus a pointwise scan.
    """
    Z = grid.nodes()
    g, _, _ = w.gauss(Z)
    if np.any(~np.isfinite(g)) or np.any(np.abs(g) < tiny) or np.any(np.abs(g) > 1 / tiny):
        raise PreconditionError("g has a zero or pole on the grid")
    if isinstance(grid, PolarGrid):
        outer = np.append(g[-1], g[-1, 0])
        inner = np.append(g[0], g[0, 0])
        n = _winding(outer) - _winding(inner)
    else:
        loop = np.concatenate([g[:, 0], g[-1, 1:], g[-2::-1, -1], g[0, -2::-1]])
        n = _winding(loop)
    if abs(n) > 0.5:
        raise PreconditionError(f"g has {round(n)} net zeros minus poles inside the grid")


def harmonic_h_residual(w: WeierstrassData, grid) -> float:
    """``max |Delta Re F|`` on interior nodes; zero up to ``O(h^2)`` for valid data."""
    zero_pole_scan(w, grid)
    a, b, periodic = _chart_axes(grid, w)
    ha, hb = _uniform_step(a, "transverse"), _uniform_step(b, "level")
    _require_interior(grid.shape, periodic)
    _, F, _, _ = _chart_terms(w, grid.nodes())
    return float(np.nanmax(np.abs(_laplacian(F.real, ha, hb, periodic))))


def approach_profile(w: WeierstrassData, p, taus, ring_tau=0.1, n_ring=256):
    """``|u|`` along the ray ``p (1 - tau)`` and the median of ``|u|`` on the ring
    ``|zeta| = |p| (1 - ring_tau)``.  Points on ``|g| = 1`` are skipped."""
    p = complex(p)
    zs = w.center + p * (1 - np.asarray(taus, float))
    ray = np.abs(_safe_u(w, zs))
    th = 2 * np.pi * (np.arange(n_ring) + 0.5) / n_ring
    ring = w.center + abs(p) * (1 - ring_tau) * np.exp(1j * (th + np.angle(p)))
    return ray, float(np.nanmedian(np.abs(_safe_u(w, ring))))


def _safe_u(w, z):
    s, F, DF, _ = _chart_terms(w, z)
    u = _u_from(s, F, DF)
    return np.where(np.abs(np.abs(s.g) - 1) <= UNIT_TOL, np.nan, u)
