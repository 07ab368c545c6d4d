"""Domain families, boundary differential geometry and excised loops."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .curves import (Curve, EllipseCurve, SplineCurve, SuperellipseCurve, dumbbell_curve,
                     stadium_curve)
from .errors import (BallsOverlap, BallSwallowsBoundary, DegenerateParametrization,
                     InvalidParams, NonSimpleBoundary, PointOutsideDomain)

FAMILIES = ("disk", "ellipse", "superellipse", "stadium", "mixed", "dumbbell", "spline")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class BoundaryPoint:
    s: float
    t: float
    point: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    kappa: float

    def frame(self) -> np.ndarray:
        """Rotation taking world vectors to the (tangent, exterior normal) frame."""
        nx, ny = self.normal
        return np.array([[ny, -nx], [nx, ny]])


@dataclass(frozen=True)
class ZeroCurvatureRecord:
    kind: str  # "isolated" or "segment"
    t0: float
    t1: float
    s0: float
    s1: float
    points: np.ndarray  # one point (isolated) or the two segment endpoints

    @property
    def t(self) -> float:
        return self.t0


class DomainSpec:
    """A simply connected domain bounded by a closed C2 curve.

    The boundary is traversed counterclockwise.  Arclength ``s`` runs over
    ``[0, perimeter)`` and is the public boundary coordinate.
    """

    def __init__(self, family: str, params: dict, curve: Curve, convex: bool,
                 n_table: int = 4096):
        self.family = family
        self.params = dict(params)
        self.curve = curve
        self.convex = convex
        self._build_table(n_table)
        self._poly = self.curve.point(np.linspace(0.0, 1.0, 8192, endpoint=False))
        self._check_simple()

    # -- arclength tables -------------------------------------------------
    def _build_table(self, n: int) -> None:
        knots = np.unique(np.concatenate([[0.0, 1.0], np.asarray(self.curve.breaks, float)]))
        per = max(int(np.ceil(n / (len(knots) - 1))), 8)
        edges = np.concatenate([np.linspace(knots[i], knots[i + 1], per + 1)[:-1]
                                for i in range(len(knots) - 1)] + [[1.0]])
        lo, hi = edges[:-1], edges[1:]
        mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes = mid[:, None] + rad[:, None] * _GL_X[None, :]
        _, r1, _ = self.curve.eval(nodes.ravel())
        sp = np.linalg.norm(r1, axis=1).reshape(nodes.shape)
        speed_min = sp.min()
        lens = rad * np.sum(_GL_W[None, :] * sp, axis=1)
        if not np.isfinite(speed_min) or speed_min <= 1e-12 * sp.mean():
            raise DegenerateParametrization(f"curve speed drops to {speed_min:.3e}")
        self._t_edges = edges
        self._s_edges = np.concatenate([[0.0], np.cumsum(lens)])
        self.perimeter = float(self._s_edges[-1])

    def s_of_t(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        whole = np.floor(t)
        tt = t - whole
        i = np.clip(np.searchsorted(self._t_edges, tt, side="right") - 1, 0, len(self._t_edges) - 2)
        lo = self._t_edges[i]
        mid, rad = 0.5 * (lo + tt), 0.5 * (tt - lo)
        nodes = mid[..., None] + rad[..., None] * _GL_X
        _, r1, _ = self.curve.eval(nodes.ravel())
        sp = np.linalg.norm(r1, axis=1).reshape(nodes.shape)
        return self._s_edges[i] + rad * np.sum(_GL_W * sp, axis=-1) + whole * self.perimeter

    def t_of_s(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        whole = np.floor(s / self.perimeter)
        ss = s - whole * self.perimeter
        t = np.interp(ss, self._s_edges, self._t_edges)
        for _ in range(3):
            _, r1, _ = self.curve.eval(np.atleast_1d(t).ravel())
            sp = np.linalg.norm(r1, axis=1).reshape(np.shape(t))
            t = t - (self.s_of_t(t) - ss) / sp
        return t + whole

    # -- geometry ---------------------------------------------------------
    def geometry_t(self, t):
        """Points, unit tangents, exterior unit normals and curvature at parameters t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        r, r1, r2 = self.curve.eval(t)
        sp = np.linalg.norm(r1, axis=1)
        tan = r1 / sp[:, None]
        nrm = np.stack([tan[:, 1], -tan[:, 0]], axis=1)
        kap = (r1[:, 0] * r2[:, 1] - r1[:, 1] * r2[:, 0]) / sp**3
        return r, tan, nrm, kap

    def kappa_s_t(self, t, dt: float = 1e-5):
        """Arclength derivative of curvature (central differences in t)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        _, _, _, kp = self.geometry_t(t + dt)
        _, _, _, km = self.geometry_t(t - dt)
        _, r1, _ = self.curve.eval(t)
        return (kp - km) / (2 * dt) / np.linalg.norm(r1, axis=1)

    def boundary_point_t(self, t: float) -> BoundaryPoint:
        r, tan, nrm, kap = self.geometry_t(np.array([t]))
        return BoundaryPoint(float(self.s_of_t(t)), float(t) % 1.0, r[0], tan[0], nrm[0], float(kap[0]))

    def sample(self, n: int) -> np.ndarray:
        """n boundary parameters equally spaced in arclength."""
        s = np.arange(n) * (self.perimeter / n)
        return self.t_of_s(s)

    @property
    def polygon(self) -> np.ndarray:
        return self._poly

    @property
    def area(self) -> float:
        x, y = self._poly[:, 0], self._poly[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def centroid(self) -> np.ndarray:
        x, y = self._poly[:, 0], self._poly[:, 1]
        cr = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = 0.5 * cr.sum()
        return np.array([np.sum((x + np.roll(x, -1)) * cr), np.sum((y + np.roll(y, -1)) * cr)]) / (6 * a)

    @cached_property
    def diameter(self) -> float:
        hull = self._poly[ConvexHull(self._poly).vertices]
        return float(pdist(hull).max())

    def contains(self, pts) -> np.ndarray:
        return points_in_polygon(np.atleast_2d(pts), self._poly)

    def distance_to_boundary(self, pts) -> np.ndarray:
        return polyline_distance(np.atleast_2d(pts), self._poly, closed=True)

    def nearest_t(self, pts) -> np.ndarray:
        """Curve parameter of the closest boundary point for each input point."""
        pts = np.atleast_2d(pts)
        n = len(self._poly)
        tgrid = np.arange(n) / n
        out = np.empty(len(pts))
        for k, p in enumerate(pts):
            j = int(np.argmin(((self._poly - p) ** 2).sum(1)))
            lo, hi = tgrid[j] - 1.0 / n, tgrid[j] + 1.0 / n

            def dist(tt):
                return float(((self.curve.point(np.array([tt]))[0] - p) ** 2).sum())

            res = minimize_scalar(dist, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-13})
            out[k] = res.x % 1.0
        return out

    def _check_simple(self) -> None:
        if self.area <= 0:
            raise NonSimpleBoundary("boundary is not counterclockwise")
        P = self.curve.point(np.linspace(0.0, 1.0, 1200, endpoint=False))
        if polygon_self_intersects(P):
            raise NonSimpleBoundary("boundary curve self-intersects")

    def normalized(self, site: BoundaryPoint):
        """Rotation and origin of the frame with tangent x-axis and exterior normal +y."""
        return site.frame(), site.point


def make_domain(family: str, params: dict | None = None) -> DomainSpec:
    params = dict(params or {})
    if family == "disk":
        r = float(params.get("r", 1.0))
        if r <= 0:
            raise InvalidParams("disk radius must be positive")
        c = params.get("center", (0.0, 0.0))
        return DomainSpec(family, {"r": r, "center": list(c)}, EllipseCurve(r, r, c), True)
    if family == "ellipse":
        a, b = float(params.get("a", 2.0)), float(params.get("b", 1.0))
        if a <= 0 or b <= 0:
            raise InvalidParams("ellipse semi-axes must be positive")
        return DomainSpec(family, {"a": a, "b": b}, EllipseCurve(a, b), True)
    if family == "superellipse":
        p = float(params.get("p", 4.0))
        a, b = float(params.get("a", 1.0)), float(params.get("b", 1.0))
        if p < 2 or a <= 0 or b <= 0:
            raise InvalidParams("superellipse needs p >= 2 and positive semi-axes")
        return DomainSpec(family, {"p": p, "a": a, "b": b}, SuperellipseCurve(p, a, b), True)
    if family in ("stadium", "mixed"):
        q = {"L": 1.0, "r_bottom": 1.5, "r_corner": 0.3, "ramp": 0.3}
        if family == "mixed":
            q.update({"zero_at": 0.5, "zero_width": 0.4})
        q.update({k: float(v) for k, v in params.items()})
        if family == "mixed" and not (0.0 < q["zero_at"] - q["zero_width"] and q["zero_at"] + q["zero_width"] < 1.0):
            raise InvalidParams("isolated zero must sit inside the bottom arc")
        curve = stadium_curve(q["L"], q["r_bottom"], q["r_corner"], q["ramp"],
                              q.get("zero_at"), q.get("zero_width", 0.3))
        return DomainSpec(family, q, curve, True)
    if family == "dumbbell":
        d = float(params.get("d", 1.1))
        w = float(params.get("w", 0.35))
        ramp = float(params.get("ramp", 0.3))
        if not (0 < w < 1 and d > 0 and ramp > 0):
            raise InvalidParams("dumbbell needs d > 0, 0 < w < 1 and a positive ramp")
        curve = dumbbell_curve(d, w, ramp)
        return DomainSpec(family, {"d": d, "w": w, "ramp": ramp}, curve, False)
    if family == "spline":
        pts = params.get("points")
        if pts is None and "csv" in params:
            pts = read_points_csv(params["csv"])
        if pts is None:
            raise InvalidParams("spline family needs 'points' or 'csv'")
        curve = SplineCurve(pts)
        dom = DomainSpec(family, {"points": np.asarray(curve.points).tolist()}, curve, False)
        _, _, _, kap = dom.geometry_t(np.linspace(0, 1, 4096, endpoint=False))
        dom.convex = bool(kap.min() >= -1e-6 * np.abs(kap).max())
        return dom
    raise InvalidParams(f"unknown domain family {family!r}")


def read_points_csv(path) -> np.ndarray:
    rows = []
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                continue  # header
    return np.array(rows)


def boundary_geometry(domain: DomainSpec, s) -> BoundaryPoint | list[BoundaryPoint]:
    """Boundary point, unit tangent, exterior normal and curvature at arclength s."""
    scalar = np.ndim(s) == 0
    ss = np.atleast_1d(np.asarray(s, dtype=float))
    t = domain.t_of_s(ss)
    r, tan, nrm, kap = domain.geometry_t(t)
    out = [BoundaryPoint(float(ss[i] % domain.perimeter), float(t[i] % 1.0), r[i], tan[i], nrm[i],
                         float(kap[i])) for i in range(len(ss))]
    return out[0] if scalar else out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal cyclic runs of True as (start, length)."""
    n = len(mask)
    if mask.all():
        return [(0, n)]
    if not mask.any():
        return []
    start = int(np.argmin(mask))  # an index where mask is False
    rolled = np.roll(mask, -start)
    out = []
    i = 0
    while i < n:
        if rolled[i]:
            j = i
            while j < n and rolled[j]:
                j += 1
            out.append(((i + start) % n, j - i))
            i = j
        else:
            i += 1
    return out


def zero_curvature_set(domain: DomainSpec, tol_kappa: float | None = None,
                       n: int = 20000) -> list[ZeroCurvatureRecord]:
    """Points and arcs of the boundary where |kappa| <= tol_kappa.

    A run is a segment when it survives a million-fold tighter tolerance with
    at least half its length; otherwise it is an isolated zero located at the
    minimum of |kappa|.
    """
    t = np.arange(n) / n
    _, _, _, kap = domain.geometry_t(t)
    kmax = float(np.abs(kap).max())
    if tol_kappa is None:
        tol_kappa = 1e-6 * kmax
    floor = max(tol_kappa * 1e-6, 1e-13 * kmax)
    out = []
    for start, length in _runs(np.abs(kap) <= tol_kappa):
        idx = (start + np.arange(length)) % n
        tight = np.abs(kap[idx]) <= floor
        n_tight = int(tight.sum())
        if n_tight >= max(3, 0.5 * length):
            t0, t1 = t[idx[tight][0]], t[idx[tight][-1]]
            if t1 < t0:
                t1 += 1.0
            t0, t1 = _refine_segment_ends(domain, t0, t1, floor, 1.0 / n)
            pts = domain.curve.point(np.array([t0, t1]))
            out.append(ZeroCurvatureRecord("segment", t0 % 1.0, t1 % 1.0,
                                           float(domain.s_of_t(t0 % 1.0)), float(domain.s_of_t(t1 % 1.0)), pts))
        else:
            # even-order zeros: the sub-level run is symmetric to leading order
            ta, tb = _refine_segment_ends(domain, t[idx[0]], t[idx[-1]], tol_kappa, 1.0 / n)
            if tb < ta:
                tb += 1.0
            sa, sb = domain.s_of_t(ta), domain.s_of_t(tb)
            tz = float(domain.t_of_s(0.5 * (sa + sb))) % 1.0
            pts = domain.curve.point(np.array([tz]))
            sz = float(domain.s_of_t(tz))
            out.append(ZeroCurvatureRecord("isolated", tz, tz, sz, sz, pts))
    out.sort(key=lambda r: r.s0)
    return out


def _refine_segment_ends(domain, t0, t1, floor, dt):
    def zero(tt):
        return abs(domain.geometry_t(np.array([tt]))[3][0]) <= floor

    def bisect(inside, outside):
        for _ in range(50):
            mid = 0.5 * (inside + outside)
            if zero(mid):
                inside = mid
            else:
                outside = mid
        return inside

    return bisect(t0, t0 - dt), bisect(t1, t1 + dt)


def is_star_shaped_wrt(domain: DomainSpec, p, n: int = 4096) -> tuple[bool, float]:
    """Star-shapedness test with margin min (q - p) . nu over boundary samples."""
    p = np.asarray(p, dtype=float)
    if not domain.contains(p)[0]:
        raise PointOutsideDomain(f"point {p.tolist()} is not inside the domain")
    r, _, nrm, _ = domain.geometry_t(domain.sample(n))
    margin = float(np.min(np.sum((r - p) * nrm, axis=1)))
    return margin > 0, margin


# -- loops ------------------------------------------------------------------

@dataclass(frozen=True)
class LoopPiece:
    kind: str  # "boundary" or "arc"
    a: float  # start parameter (t for boundary, angle for arc)
    b: float  # end parameter
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0

    def length(self, domain: DomainSpec | None) -> float:
        if self.kind == "arc":
            return abs(self.b - self.a) * self.radius
        return float(domain.s_of_t(self.b) - domain.s_of_t(self.a))


@dataclass(frozen=True)
class RegionLoop:
    """Closed counterclockwise loop made of boundary arcs and circle arcs."""

    pieces: tuple[LoopPiece, ...]
    domain: DomainSpec | None = field(default=None, compare=False, repr=False)
    centers: tuple = ()
    epsilon: float = 0.0

    def _cum(self):
        lens = np.array([p.length(self.domain) for p in self.pieces])
        return np.concatenate([[0.0], np.cumsum(lens)]) / lens.sum(), float(lens.sum())

    @property
    def length(self) -> float:
        return self._cum()[1]

    def breakpoints(self) -> np.ndarray:
        return self._cum()[0][:-1]

    def evaluate(self, u):
        """Points at loop parameters u in [0, 1) and boundary parameters (nan on arcs)."""
        u = np.mod(np.atleast_1d(np.asarray(u, dtype=float)), 1.0)
        cum, _ = self._cum()
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(self.pieces) - 1)
        loc = (u - cum[idx]) / (cum[idx + 1] - cum[idx])
        pts = np.empty((len(u), 2))
        tb = np.full(len(u), np.nan)
        for k, pc in enumerate(self.pieces):
            m = idx == k
            if not m.any():
                continue
            if pc.kind == "arc":
                ang = pc.a + (pc.b - pc.a) * loc[m]
                pts[m] = np.asarray(pc.center) + pc.radius * np.stack([np.cos(ang), np.sin(ang)], 1)
            else:
                s0, s1 = self.domain.s_of_t(pc.a), self.domain.s_of_t(pc.b)
                tt = self.domain.t_of_s(s0 + (s1 - s0) * loc[m])
                pts[m] = self.domain.curve.point(tt)
                tb[m] = np.mod(tt, 1.0)
        return pts, tb

    def polyline(self, n: int = 512) -> np.ndarray:
        return self.evaluate(np.arange(n) / n)[0]

    def contains(self, pts, n: int = 2048) -> np.ndarray:
        return points_in_polygon(np.atleast_2d(pts), self.polyline(n))


def boundary_loop(domain: DomainSpec) -> RegionLoop:
    return RegionLoop((LoopPiece("boundary", 0.0, 1.0),), domain)


def circle_loop(center, radius: float) -> RegionLoop:
    return RegionLoop((LoopPiece("arc", 0.0, 2 * np.pi, tuple(map(float, center)), float(radius)),))


def _circle_exit(domain: DomainSpec, tc: float, eps: float, direction: int) -> float:
    """Boundary parameter where |r(t) - r(tc)| first reaches eps walking from tc."""
    c = domain.curve.point(np.array([tc]))[0]
    step = direction * 0.25 * eps / domain.perimeter
    prev = tc
    t = tc
    for _ in range(int(8 * domain.perimeter / eps) + 10):
        t = prev + step
        d = np.linalg.norm(domain.curve.point(np.array([t]))[0] - c)
        if d >= eps:
            break
        prev = t
    else:
        raise BallSwallowsBoundary("excision circle never leaves the boundary")
    lo, hi = prev, t
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(domain.curve.point(np.array([mid]))[0] - c) < eps:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def omega_epsilon(domain: DomainSpec, centers, eps: float) -> RegionLoop:
    """Boundary of the domain with eps-balls around boundary sites removed.

    ``centers`` are boundary parameters t.  Each excised boundary arc is
    replaced by the arc of the circle |x - c| = eps lying inside the domain.
    """
    tcs = sorted(float(t) % 1.0 for t in centers)
    if eps <= 0:
        raise InvalidParams("epsilon must be positive")
    if not tcs:
        return boundary_loop(domain)
    cpts = domain.curve.point(np.array(tcs))
    for i in range(len(tcs)):
        for j in range(i + 1, len(tcs)):
            if np.linalg.norm(cpts[i] - cpts[j]) <= 4 * eps:
                raise BallsOverlap(f"sites {i} and {j} are closer than 4 eps")
    cuts = []
    for tc, c in zip(tcs, cpts):
        tm = _circle_exit(domain, tc, eps, -1)
        tp = _circle_exit(domain, tc, eps, +1)
        # no other part of the boundary may enter the ball
        span = (tp - tm) % 1.0
        tt = tp + np.linspace(0, 1, 4001)[1:-1] * (1.0 - span)
        far = np.linalg.norm(domain.curve.point(tt) - c, axis=1)
        if far.min() < eps:
            raise BallSwallowsBoundary("excision circle meets the boundary more than twice")
        cuts.append((tm, tc, tp, c))
    pieces = []
    n = len(cuts)
    for k, (tm, tc, tp, c) in enumerate(cuts):
        pm, pp = domain.curve.point(np.array([tm, tp]))
        _, _, nrm, _ = domain.geometry_t(np.array([tc]))
        a0 = np.arctan2(*(pm - c)[::-1])
        a1 = np.arctan2(*(pp - c)[::-1])
        ain = np.arctan2(*(-nrm[0])[::-1])
        # sweep from a0 to a1 passing through the inward direction ain
        cw = (a0 - ain) % (2 * np.pi) + (ain - a1) % (2 * np.pi)
        if cw < 2 * np.pi:
            b1 = a0 - cw  # clockwise sweep
        else:
            b1 = a0 + ((a1 - a0) % (2 * np.pi))
        pieces.append(LoopPiece("arc", float(a0), float(b1), (float(c[0]), float(c[1])), float(eps)))
        tnext = cuts[(k + 1) % n][0]
        if tnext <= tp:
            tnext += 1.0
        pieces.append(LoopPiece("boundary", float(tp), float(tnext)))
    return RegionLoop(tuple(pieces), domain, tuple(tcs), float(eps))


# -- planar utilities -------------------------------------------------------

def points_in_polygon(pts: np.ndarray, poly: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Even-odd ray casting against a closed polygon."""
    pts = np.atleast_2d(pts)
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    out = np.zeros(len(pts), dtype=bool)
    for i in range(0, len(pts), chunk):
        px = pts[i:i + chunk, 0:1]
        py = pts[i:i + chunk, 1:2]
        cond = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        out[i:i + chunk] = (np.sum(cond & (px < xint), axis=1) % 2) == 1
    return out


def polyline_distance(pts: np.ndarray, poly: np.ndarray, closed: bool = True,
                      chunk: int = 1024) -> np.ndarray:
    a = poly
    b = np.roll(poly, -1, axis=0) if closed else poly[1:]
    if not closed:
        a = poly[:-1]
    ab = b - a
    L2 = np.maximum((ab**2).sum(1), 1e-300)
    out = np.empty(len(pts))
    for i in range(0, len(pts), chunk):
        p = pts[i:i + chunk]
        ap = p[:, None, :] - a[None, :, :]
        s = np.clip((ap * ab[None]).sum(-1) / L2[None], 0.0, 1.0)
        d = ap - s[..., None] * ab[None]
        out[i:i + chunk] = np.sqrt((d**2).sum(-1).min(1))
    return out


def segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Proper intersection test for arrays of segments p1p2 against q1q2."""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def polygon_self_intersects(P: np.ndarray, closed: bool = True) -> bool:
    n = len(P)
    a = P
    b = np.roll(P, -1, axis=0) if closed else np.vstack([P[1:], P[-1:]])
    m = n if closed else n - 1
    for i in range(m):
        j = np.arange(i + 2, m)
        if closed and i == 0:
            j = j[j != m - 1]
        if len(j) == 0:
            continue
        hit = segments_intersect(a[i][None], b[i][None], a[j], b[j])
        if hit.any():
            return True
    return False
