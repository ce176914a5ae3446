"""Extraction and classification of horizontal level curves."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import interpolate, spatial
from skimage import measure

from .errors import OutOfSlab, TooFewPoints

MIN_POINTS = 16
MIN_SPACING = 1e-9
# backward turning (radians) tolerated on grid contours
PDE_TOL_TURN = 1e-2


@dataclass(frozen=True)
class LevelCurve:
    """Planar samples ``(x1, x2)`` of a level at height ``t``.

    Closed curves are stored without repeating the first point.  A curve
    collapsed to (numerically) one point is flagged ``degenerate``; its
    samples are kept as they are.  ``interior`` (+1 left, -1 right of the
    direction of travel) names the side of the region the level bounds, when
    known; ``spacing`` is the resolution of the underlying data and sets the
    resampling used by the convexity test.
    """

    t: float
    points: np.ndarray
    closed: bool
    source: str
    degenerate: bool = False
    interior: Optional[int] = None
    spacing: Optional[float] = None

    def __post_init__(self):
        pts = np.asarray(self.points, float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        if not self.degenerate and len(pts) > 1:
            gaps = np.hypot(*np.diff(pts, axis=0).T)
            if np.any(gaps < MIN_SPACING):
                raise ValueError("consecutive points closer than 1e-9")
            if self.closed and np.hypot(*(pts[0] - pts[-1])) < MIN_SPACING:
                raise ValueError("closed curve repeats its first point")

    def __len__(self):
        return len(self.points)


def make_curve(t, pts, closed, source, **kw) -> LevelCurve:
    """Drop repeated consecutive samples; flag curves that collapse entirely."""
    pts = np.asarray(pts, float)
    keep = [0]
    for k in range(1, len(pts)):
        if np.hypot(*(pts[k] - pts[keep[-1]])) >= MIN_SPACING:
            keep.append(k)
    if closed and len(keep) > 1 and np.hypot(*(pts[keep[-1]] - pts[0])) < MIN_SPACING:
        keep.pop()
    if len(keep) < 3 <= len(pts):
        return LevelCurve(float(t), pts, closed, source, degenerate=True, **kw)
    return LevelCurve(float(t), pts[keep], closed, source, **kw)


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float
    residual: float
    kind: str = field(default="Circle", init=False)


@dataclass(frozen=True)
class StraightLine:
    direction: tuple
    residual: float
    kind: str = field(default="StraightLine", init=False)


@dataclass(frozen=True)
class ConvexJordan:
    turning: float
    kind: str = field(default="ConvexJordan", init=False)


@dataclass(frozen=True)
class NonConvex:
    defect_count: int
    turning: float = float("nan")
    kind: str = field(default="NonConvex", init=False)


@dataclass(frozen=True)
class ConePoint:
    location: tuple
    spread: float
    kind: str = field(default="ConePoint", init=False)


def verdict_record(t, v) -> dict:
    d = asdict(v)
    kind = d.pop("kind")
    res = d.get("residual", d.get("spread", 0.0))
    return {"t": float(t), "kind": kind, "params": _plain(d), "residual": float(res)}


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (tuple, list, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# classification


def _diameter(p):
    if len(p) > 3:
        try:
            p = p[spatial.ConvexHull(p).vertices]
        except spatial.QhullError:
            pass
    return float(np.max(spatial.distance.pdist(p))) if len(p) > 1 else 0.0


def kasa_fit(p):
    """Algebraic circle fit on centered data.

    Returns ``(center, radius, residual)`` where the residual is the largest
    radial deviation divided by ``min(radius, diameter)``; the second scale
    keeps long, nearly straight arcs from passing as huge circles.
    """
    m = p.mean(axis=0)
    q = p - m
    A = np.column_stack([2 * q[:, 0], 2 * q[:, 1], np.ones(len(q))])
    b = (q ** 2).sum(axis=1)
    (a, c, d), *_ = np.linalg.lstsq(A, b, rcond=None)
    R = np.sqrt(max(d + a * a + c * c, 0.0))
    dist = np.hypot(q[:, 0] - a, q[:, 1] - c)
    scale = min(R, _diameter(p))
    res = float(np.max(np.abs(dist - R)) / scale) if scale > 0 else np.inf
    return (float(m[0] + a), float(m[1] + c)), float(R), res


def tls_line(p):
    """Total-least-squares line; returns ``(direction, max normal distance)``."""
    q = p - p.mean(axis=0)
    _, _, vt = np.linalg.svd(q, full_matrices=False)
    d, n = vt[0], vt[1]
    return (float(d[0]), float(d[1])), float(np.max(np.abs(q @ n)))


def resample_curve(p, closed, ds):
    """Points at uniform arc-length spacing close to ``ds`` along the polyline."""
    q = np.vstack([p, p[:1]]) if closed else p
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(q, axis=0).T))])
    n = max(int(round(s[-1] / ds)), MIN_POINTS)
    si = np.linspace(0.0, s[-1], n, endpoint=not closed)
    return np.column_stack([np.interp(si, s, q[:, 0]), np.interp(si, s, q[:, 1])])


def turning_angles(p, closed=True):
    """Signed exterior angles between consecutive edges."""
    e = np.roll(p, -1, axis=0) - p if closed else np.diff(p, axis=0)
    e1 = np.roll(e, -1, axis=0) if closed else e[1:]
    e0 = e if closed else e[:-1]
    cross = e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]
    return np.arctan2(cross, (e0 * e1).sum(axis=1))


def wrong_way_defects(a, closed, tol):
    """Backward runs of the oriented turning ``a`` that exceed ``tol``.

    Returns ``(count, worst)``: the number of separate runs whose accumulated
    backward turning exceeds ``tol`` and the largest accumulation seen.
    Sign flips that stay below ``tol`` (sampling noise) are ignored.
    """
    a = np.asarray(a, float)
    if closed and a.size:
        a = np.roll(a, -(int(np.argmax(a)) + 1))
    count, worst, peak, cur, in_run = 0, 0.0, 0.0, 0.0, False
    for v in a:
        cur += v
        if cur >= peak:
            peak, in_run = cur, False
            continue
        worst = max(worst, peak - cur)
        if peak - cur > tol and not in_run:
            count += 1
            in_run = True
    return count, float(worst)


def _oriented_turning(c: LevelCurve, p):
    q = resample_curve(p, c.closed, c.spacing) if c.spacing else p
    a = turning_angles(q, c.closed)
    turn = float(np.sum(a))
    orient = c.interior if c.interior is not None else (1.0 if turn >= 0 else -1.0)
    return orient * a, turn


def classify_curve(c: LevelCurve, tol_circle=1e-3, tol_line=None, tol_cone=None, tol_turn=1e-9):
    """Circle / cone point / straight line / convex / non-convex.

    ``tol_cone`` (absolute diameter, default ``tol_circle``) decides cone
    points; circles need a Kasa residual below ``tol_circle`` and a radius
    below ``1e3`` diameters; lines need a TLS residual below ``tol_line``
    (default ``1e-3`` diameters).  A convex curve turns one way only: its
    backward runs accumulate at most ``tol_turn`` radians, and a closed one
    turns by ``+-2 pi`` (within 0.1) in total.  The forward sense is taken
    from ``c.interior`` when known, else from the total turning.
    """
    p = np.asarray(c.points, float)
    if len(p) < MIN_POINTS:
        raise TooFewPoints(f"classification needs at least {MIN_POINTS} points, got {len(p)}")
    diam = _diameter(p)
    tol_cone = tol_circle if tol_cone is None else tol_cone
    if diam < tol_cone:
        return ConePoint(tuple(float(v) for v in p.mean(axis=0)), diam)
    center, R, res = kasa_fit(p)
    if R <= 1e3 * diam and res < tol_circle:
        return Circle(center, R, res)
    tol_line = 1e-3 * diam if tol_line is None else tol_line
    direction, lres = tls_line(p)
    if lres < tol_line:
        return StraightLine(direction, lres)
    a, turn = _oriented_turning(c, p)
    count, _ = wrong_way_defects(a, c.closed, tol_turn)
    if count == 0 and (not c.closed or abs(abs(turn) - 2 * np.pi) < 0.1):
        return ConvexJordan(turn)
    return NonConvex(count, turn)


def convexity_defect(c: LevelCurve) -> float:
    """Largest accumulated backward turning (radians) along the curve."""
    a, _ = _oriented_turning(c, np.asarray(c.points, float))
    return wrong_way_defects(a, c.closed, np.inf)[1]


# ---------------------------------------------------------------------------
# extraction


def extract_level(surface, t) -> LevelCurve:
    """Image of the grid level nearest to normalized height ``t``.

    The returned curve carries the normalized height of the ring actually
    used.
    """
    if not -1 < t < 1:
        raise OutOfSlab(f"t = {t} is outside the open slab (-1, 1)")
    lv = surface.level_values()
    target = surface.level_from_normalized(t)
    i = int(np.argmin(np.abs(lv - target)))
    pts = surface.X[i, :, :2]
    ok = surface.present[i] & np.all(np.isfinite(pts), axis=1)
    closed = surface.grid.kind == "polar" and bool(np.all(ok))
    return make_curve(float(surface.normalized_height(lv[i])), pts[ok], closed, "surface-ring")


def ring_height_step(surface, t) -> float:
    """Mean height gap to the neighbouring rings of the ring used for ``t``."""
    lv = surface.level_values()
    i = int(np.argmin(np.abs(lv - surface.level_from_normalized(t))))
    x3 = np.nanmean(surface.X[:, :, 2], axis=1)
    nb = [k for k in (i - 1, i + 1) if 0 <= k < len(lv)]
    return float(np.mean([abs(x3[k] - x3[i]) for k in nb]))


def extract_contours(xs, ys, values, mask, t, min_points=MIN_POINTS, t_end=None) -> list:
    """Marching-squares contours of ``values == t`` on the nodes where ``mask`` holds.

    ``values`` is indexed ``[ix, iy]``.  Given the far-field height ``t_end``
    each curve is tagged with the side of the region it bounds: levels above
    ``t_end`` bound super-level sets, levels below bound sub-level sets.
    """
    mask = np.asarray(mask, bool)
    vals = np.where(mask, values, np.nan)
    h = float(min(xs[1] - xs[0], ys[1] - ys[0]))
    itp = None
    if t_end is not None:
        itp = interpolate.RegularGridInterpolator((xs, ys), vals, bounds_error=False, fill_value=np.nan)
    out = []
    for c in measure.find_contours(vals, t, mask=mask):
        x = np.interp(c[:, 0], np.arange(len(xs)), xs)
        y = np.interp(c[:, 1], np.arange(len(ys)), ys)
        pts = np.column_stack([x, y])
        closed = len(pts) > 2 and np.hypot(*(pts[0] - pts[-1])) < 1e-12
        if closed:
            pts = pts[:-1]
        interior = None if itp is None else _interior_side(itp, pts, t, t_end, h)
        cur = make_curve(t, pts, closed, "contour", interior=interior, spacing=h)
        if len(cur) >= min_points and not cur.degenerate:
            out.append(cur)
    return out


def _interior_side(itp, pts, t, t_end, h):
    """+1 if the bounded region lies left of the direction of travel, else -1."""
    votes = 0
    m = len(pts)
    for k in range(1, m - 1, max(1, m // 32)):
        tng = pts[k + 1] - pts[k - 1]
        nrm = np.hypot(*tng)
        if nrm == 0:
            continue
        v = itp(pts[k] + 0.5 * h * np.array([-tng[1], tng[0]]) / nrm)[0]
        if np.isfinite(v):
            votes += 1 if (v > t) == (t > t_end) else -1
    return 1 if votes >= 0 else -1


@dataclass
class ScanReport:
    """Verdicts in scan order; ``sources`` tags each entry (ring, contour or boundary).

    ``empty`` lists requested heights at which the grid holds no level.
    """

    entries: list
    sources: list = field(default_factory=list)
    empty: list = field(default_factory=list)

    @property
    def counts(self) -> dict:
        return dict(Counter(v.kind for _, v in self.entries))

    def kinds(self):
        return [v.kind for _, v in self.entries]

    def records(self):
        recs = [verdict_record(t, v) for t, v in self.entries]
        for r, src in zip(recs, self.sources):
            r["source"] = src
        return recs


def slab_scan(surface, heights, tol_circle=1e-3, tol_line=None, cone_factor=1.5, tol_turn=PDE_TOL_TURN) -> ScanReport:
    """Classify the levels of a surface grid or of a PDE solution at the given heights.

    For a surface the ring nearest to each normalized height is used.  A
    ring is a cone point when its diameter is below ``cone_factor`` times
    the height gap to its neighbouring rings: near a cone point a spacelike
    surface is squeezed against the light cone, so the smallest resolvable
    level has diameter comparable to the height resolution.

    For a PDE solution (anything with a ``disc`` attribute) every
    marching-squares contour of ``nu = t`` is classified, with backward
    turning below ``tol_turn`` radians treated as grid noise.  A height equal
    to the data of a hole classifies that hole's boundary curve instead.
    """
    if hasattr(surface, "disc"):
        return _pde_scan(surface, heights, tol_circle, tol_line, tol_turn)
    out = []
    for t in heights:
        c = extract_level(surface, t)
        tol_cone = cone_factor * ring_height_step(surface, t)
        out.append((c.t, classify_curve(c, tol_circle, tol_line, tol_cone)))
    return ScanReport(out, ["ring"] * len(out))


def _pde_scan(sol, heights, tol_circle, tol_line, tol_turn):
    dom = sol.domain
    h = dom.h
    phis = [hl.phi for hl in dom.holes]
    outer = getattr(dom.far_field, "value", None)
    if outer is not None and not callable(outer):
        phis.append(float(outer))
    lo, hi = min(phis), max(phis)
    out, src, empty = [], [], []
    for t in heights:
        t = float(t)
        if not lo <= t <= hi:
            raise OutOfSlab(f"t = {t} is outside the data range [{lo}, {hi}]")
        on_hole = [hl for hl in dom.holes if hl.phi == t]
        for hl in on_hole:
            n = max(256, int(np.ceil(_perimeter(hl.curve.sample(1024)) / h)))
            c = make_curve(t, hl.curve.sample(n), True, "boundary")
            out.append((t, classify_curve(c, tol_circle, tol_line, tol_turn=tol_turn)))
            src.append(f"boundary:{hl.label}")
        if on_hole:
            continue
        curves = extract_contours(sol.xs, sol.ys, sol.values, sol.mask, t, t_end=sol.t0)
        if not curves:
            empty.append(t)
        for c in curves:
            out.append((t, classify_curve(c, tol_circle, tol_line, tol_turn=tol_turn)))
            src.append("contour:closed" if c.closed else "contour:open")
    return ScanReport(out, src, empty)


def _perimeter(p):
    return float(np.sum(np.hypot(*(np.roll(p, -1, axis=0) - p).T)))
