"""Nodal sets of directional derivatives, M_theta points, branch slopes at
boundary tangencies and the analysis at degenerate boundary points."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .contour import boundary_edges, zero_contours
from .degree import levelset_curvature_dy
from .errors import HypothesesViolated, MultipleXi, NoXi
from .geometry import DomainSpec, ZeroCurvatureRecord, segments_intersect
from .jets import Jet3, ScalarField

log = logging.getLogger(__name__)

TAU_NODAL = 1e-12


def default_thetas(n: int = 64) -> np.ndarray:
    """Equispaced directions in [0, pi); u_theta and u_(theta+pi) share nodal sets."""
    return np.pi * np.arange(n) / n


def _e(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)])


class DirectionalField(ScalarField):
    """u_theta = <grad u, e_theta> with vertex values from recovered gradients.

    Jets are derived from the parent's third-order jets, so they carry
    derivatives of u_theta up to order two; third derivatives are NaN.
    """

    def __init__(self, parent: ScalarField, theta: float):
        self.parent = parent
        self.theta = float(theta)
        J = parent.vertex_jets()
        e = _e(theta)
        super().__init__(parent.mesh, e[0] * J[:, 1] + e[1] * J[:, 2], parent.config)

    def fit(self, point, t_boundary=None) -> np.ndarray:
        j = self.parent.fit(point, t_boundary)
        c, s = _e(self.theta)
        out = np.full(10, np.nan)
        out[0] = c * j[1] + s * j[2]
        out[1] = c * j[3] + s * j[4]
        out[2] = c * j[4] + s * j[5]
        out[3] = c * j[6] + s * j[7]
        out[4] = c * j[7] + s * j[8]
        out[5] = c * j[8] + s * j[9]
        return out


def directional_field(field: ScalarField, theta: float) -> DirectionalField:
    return DirectionalField(field, theta)


# -- tracing ----------------------------------------------------------------

@dataclass(frozen=True)
class NodalEndpoint:
    point: tuple[float, float]
    tag: str  # "boundary" or "interior"
    t: float | None = None


@dataclass(eq=False)
class NodalCurve:
    theta: float
    polyline: np.ndarray
    endpoints: tuple[NodalEndpoint, ...]
    self_intersects: bool
    closed_loop: bool
    junction: bool = False

    @property
    def n_boundary_endpoints(self) -> int:
        return sum(1 for e in self.endpoints if e.tag == "boundary")


def _path_self_intersects(P: np.ndarray, closed: bool, area_tol: float) -> bool:
    """Segment-pair test ignoring near-tangent touches below ``area_tol``."""
    n = len(P)
    if n < 4:
        return False
    a = P if closed else P[:-1]
    b = np.roll(P, -1, axis=0) if closed else P[1:]
    m = len(a)
    for i in range(m):
        j = np.arange(i + 2, m)
        if closed and i == 0:
            j = j[j != m - 1]
        if not len(j):
            continue
        hit = segments_intersect(a[i][None], b[i][None], a[j], b[j])
        if not hit.any():
            continue
        for k in j[hit]:
            u, v = b[i] - a[i], b[k] - a[k]
            if abs(u[0] * v[1] - u[1] * v[0]) > area_tol:
                return True
    return False


def _paths_cross(P: np.ndarray, Q: np.ndarray, area_tol: float) -> bool:
    for i in range(len(P) - 1):
        hit = segments_intersect(P[i][None], P[i + 1][None], Q[:-1], Q[1:])
        for k in np.flatnonzero(hit):
            u, v = P[i + 1] - P[i], Q[k + 1] - Q[k]
            if abs(u[0] * v[1] - u[1] * v[0]) > area_tol:
                return True
    return False


def trace_zero_set(field: ScalarField, theta: float = 0.0, skip_boundary_edges: bool = True,
                   snap_rel: float = TAU_NODAL, endpoint_snap: float | None = None) -> list[NodalCurve]:
    """Zero contours of a field's P1 interpolant, chained into NodalCurves.

    Ends within ``endpoint_snap`` (default 2h) of the boundary curve are
    projected onto it and tagged "boundary".  Contour pieces on boundary
    edges (where the field vanishes along the boundary) are skipped.
    """
    mesh = field.mesh
    h = mesh.h
    vals = field.values
    scale = float(np.abs(vals).max()) if len(vals) else 0.0
    skip = boundary_edges(mesh.triangles) if skip_boundary_edges else None
    paths = zero_contours(mesh.vertices, mesh.triangles, vals, snap_rel * scale, skip)
    snap_d = 2 * h if endpoint_snap is None else endpoint_snap
    dom = mesh.domain
    curves = []
    for p in paths:
        P = p.points.copy()
        ends: list[NodalEndpoint] = []
        if not p.closed:
            for idx in (0, -1):
                q = P[idx]
                if dom is not None:
                    dist = float(dom.distance_to_boundary(q)[0])
                    if dist <= snap_d:
                        t = float(dom.nearest_t(q)[0])
                        P[idx] = dom.curve.point(np.array([t]))[0]
                        ends.append(NodalEndpoint(tuple(map(float, P[idx])), "boundary", t))
                        continue
                else:
                    bv = mesh.vertices[mesh.boundary]
                    if len(bv) and np.min(np.linalg.norm(bv - q, axis=1)) <= snap_d:
                        ends.append(NodalEndpoint(tuple(map(float, q)), "boundary"))
                        continue
                ends.append(NodalEndpoint(tuple(map(float, q)), "interior"))
        junction = any(d > 2 for d in p.ends)
        si = _path_self_intersects(P, p.closed, h * h * 1e-3)
        curves.append(NodalCurve(float(theta), P, tuple(ends), si, bool(p.closed), junction))
    # pieces meeting at a junction, or crossing each other, are one self-intersecting set
    for i, ci in enumerate(curves):
        for j in range(i + 1, len(curves)):
            cj = curves[j]
            if paths[i].component == paths[j].component and (ci.junction or cj.junction):
                ci.self_intersects = cj.self_intersects = True
            elif _paths_cross(ci.polyline, cj.polyline, h * h * 1e-3):
                ci.self_intersects = cj.self_intersects = True
    curves.sort(key=lambda c: (-len(c.polyline), tuple(np.round(c.polyline[0], 9))))
    return curves


def trace_nodal_set(field: ScalarField, theta: float) -> list[NodalCurve]:
    """Nodal curves of u_theta."""
    return trace_zero_set(directional_field(field, theta), theta)


@dataclass(eq=False)
class NodalBattery:
    """Structure of the nodal sets over sampled directions."""

    thetas: np.ndarray
    curves: dict = field(repr=False)
    m_theta: dict = field(repr=False)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def n_m_theta(self) -> int:
        return sum(len(v) for v in self.m_theta.values())

    def to_dict(self) -> dict:
        return {"n_theta": int(len(self.thetas)), "ok": self.ok,
                "n_m_theta": self.n_m_theta, "failures": self.failures[:20]}


def nodal_battery(field: ScalarField, thetas=None, tau_grad: float | None = None,
                  detect: bool = True) -> NodalBattery:
    """One open curve with two boundary ends and no self-intersection per theta."""
    thetas = default_thetas() if thetas is None else np.asarray(thetas, float)
    tau_grad = _tau_grad(field) if tau_grad is None else tau_grad
    curves, mth, fails = {}, {}, []
    for th in thetas:
        cs = trace_nodal_set(field, float(th))
        curves[float(th)] = cs
        if len(cs) != 1:
            fails.append({"theta": float(th), "reason": f"{len(cs)} curves"})
        for c in cs:
            if c.closed_loop:
                fails.append({"theta": float(th), "reason": "closed loop"})
            elif c.n_boundary_endpoints != 2:
                fails.append({"theta": float(th), "reason": f"{c.n_boundary_endpoints} boundary ends"})
            if c.self_intersects:
                fails.append({"theta": float(th), "reason": "self-intersection"})
        if detect:
            mth[float(th)] = detect_m_theta(field, float(th), cs, tau_grad)
    return NodalBattery(thetas, curves, mth, fails)


# -- M_theta -----------------------------------------------------------------

def _tau_grad(field: ScalarField) -> float:
    h = field.mesh.h
    return 10 * h * h * field.max_gradient()


def _interp_vertex(mesh, vjets: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Linear interpolation of per-vertex data at points (nearest-triangle fallback)."""
    from scipy.spatial import cKDTree

    V = mesh.vertices
    T = mesh.triangles
    cent = V[T].mean(1)
    tree = cKDTree(cent)
    out = np.empty((len(pts), vjets.shape[1]))
    _, cand = tree.query(pts, k=min(8, len(T)))
    cand = np.atleast_2d(cand)
    for i, q in enumerate(pts):
        best, lam_best = None, None
        for t in cand[i]:
            a, b, c = V[T[t]]
            M = np.array([b - a, c - a]).T
            l12 = np.linalg.solve(M, q - a)
            lam = np.array([1 - l12.sum(), l12[0], l12[1]])
            if best is None or lam.min() > lam_best.min():
                best, lam_best = t, lam
            if lam.min() >= -1e-12:
                break
        out[i] = lam_best @ vjets[T[best]]
    return out


def detect_m_theta(field: ScalarField, theta: float, curves: list[NodalCurve] | None = None,
                   tau_grad: float | None = None, seed_fraction: float = 0.25,
                   boundary_margin: float | None = None) -> list[np.ndarray]:
    """Points of N_theta where grad u_theta vanishes, away from critical points of u.

    Seeds are local minima of |grad u_theta| along the traced curves
    (interpolated vertex Hessians); each seed is polished by Newton on
    grad u_theta = 0 and accepted by the tolerance tests.
    """
    mesh = field.mesh
    h = mesh.h
    tau_grad = _tau_grad(field) if tau_grad is None else tau_grad
    margin = 2 * h if boundary_margin is None else boundary_margin
    if curves is None:
        curves = trace_nodal_set(field, theta)
    e = _e(theta)
    J = field.vertex_jets()
    G = np.stack([e[0] * J[:, 3] + e[1] * J[:, 4], e[0] * J[:, 4] + e[1] * J[:, 5]], 1)
    gscale = float(np.sqrt(J[:, 3] ** 2 + 2 * J[:, 4] ** 2 + J[:, 5] ** 2).max())
    dom = mesh.domain
    found: list[np.ndarray] = []
    for c in curves:
        P = c.polyline
        if len(P) < 3:
            continue
        g = np.linalg.norm(_interp_vertex(mesh, G, P), axis=1)
        gp = np.concatenate([[np.inf], g, [np.inf]]) if not c.closed_loop else np.concatenate([g[-1:], g, g[:1]])
        is_min = (g <= gp[:-2]) & (g <= gp[2:]) & (g <= seed_fraction * gscale)
        for s in P[is_min]:
            q = _polish_m_theta(field, s, e, step_cap=h)
            if q is None:
                continue
            if dom is not None:
                if not dom.contains(q)[0] or dom.distance_to_boundary(q)[0] <= margin:
                    continue
            j = field.fit(q)
            grad = np.hypot(j[1], j[2])
            ut = e[0] * j[1] + e[1] * j[2]
            gut = np.hypot(e[0] * j[3] + e[1] * j[4], e[0] * j[4] + e[1] * j[5])
            if grad <= tau_grad or abs(ut) > tau_grad or gut > tau_grad:
                continue
            if any(np.linalg.norm(q - f) < 2 * h for f in found):
                continue
            found.append(q)
    found.sort(key=lambda p: (round(float(p[0]), 9), round(float(p[1]), 9)))
    return found


def _polish_m_theta(field: ScalarField, q0, e, step_cap: float, max_iters: int = 30):
    q = np.asarray(q0, float).copy()
    for _ in range(max_iters):
        try:
            j = field.fit(q)
        except Exception:
            return None
        F = np.array([e[0] * j[3] + e[1] * j[4], e[0] * j[4] + e[1] * j[5]])
        A = np.array([[e[0] * j[6] + e[1] * j[7], e[0] * j[7] + e[1] * j[8]],
                      [e[0] * j[7] + e[1] * j[8], e[0] * j[8] + e[1] * j[9]]])
        try:
            dq = -np.linalg.solve(A, F)
        except np.linalg.LinAlgError:
            return None
        n = float(np.linalg.norm(dq))
        if n > step_cap:
            dq *= step_cap / n
        q = q + dq
        if n < 1e-12:
            return q
    return q if n < 1e-8 else None


# -- branch slopes -------------------------------------------------------------

@dataclass(frozen=True)
class BranchSlopes:
    slope_formula: tuple[float, float]
    slope_traced: float
    match: bool
    rel_error: float


def branch_slopes(F_jet: Jet3, traced: NodalCurve, tau: float = 1e-8, n_points: int = 20,
                  rel_tol: float = 0.05, exclude_radius: float = 0.0) -> BranchSlopes:
    """Compare a traced zero branch of F at a tangency point with +-sqrt(-F_xx/F_yy).

    The jet is taken in the frame where the boundary is tangent to the
    x-axis at the point.  The traced slope comes from a least-squares fit
    y = m x + q x^2 through the point, using the ``n_points`` contour points
    nearest to it on one side beyond ``exclude_radius`` (the piecewise-linear
    contour is unreliable within a few mesh sizes of the crossing).
    """
    fails = []
    for name, val in (("F", F_jet.u), ("F_x", F_jet.ux), ("F_y", F_jet.uy), ("F_xy", F_jet.uxy)):
        if abs(val) > tau:
            fails.append(f"{name} = {val:.3e} is not zero")
    if not F_jet.uxx < -tau:
        fails.append(f"F_xx = {F_jet.uxx:.3e} is not negative")
    if not F_jet.uyy > tau:
        fails.append(f"F_yy = {F_jet.uyy:.3e} is not positive")
    if fails:
        raise HypothesesViolated("branch-slope hypotheses fail: " + "; ".join(fails), fails)
    s = float(np.sqrt(-F_jet.uxx / F_jet.uyy))
    p0 = np.asarray(F_jet.point, float)
    P = traced.polyline - p0
    d = np.linalg.norm(P, axis=1)
    keep = d > max(exclude_radius, 1e-14)
    P, d = P[keep], d[keep]
    if len(P) < 3:
        raise ValueError("traced curve has too few points near the tangency point")
    side = np.sign(P[np.argmin(d), 0]) or 1.0
    mask = np.sign(P[:, 0]) == side
    Q = P[mask][np.argsort(d[mask])[:n_points]]
    if len(Q) < 3:
        raise ValueError("traced curve has too few points on one side of the tangency point")
    A = np.stack([Q[:, 0], Q[:, 0] ** 2], 1)
    slope = float(np.linalg.lstsq(A, Q[:, 1], rcond=None)[0][0])
    rel = min(abs(slope - s), abs(slope + s)) / s
    return BranchSlopes((s, -s), slope, bool(rel <= rel_tol), float(rel))


# -- degenerate boundary points -------------------------------------------------

@dataclass(eq=False)
class DegenerateBoundaryReport:
    location: tuple[float, float]
    t: float
    u_x: float
    u_xx: float
    u_xy: float
    u_y: float
    u_xxy: float
    kappa_y: float
    case: str  # case1_uxy_nonzero | case2_uxy_zero | segment
    xi: tuple[float, float] | None = None
    checks: dict = field(default_factory=dict)
    tau_grad: float = 0.0

    def to_dict(self) -> dict:
        out = {"location": [float(v) for v in self.location], "t": float(self.t), "case": self.case,
               "u_x": self.u_x, "u_xx": self.u_xx, "u_xy": self.u_xy, "u_y": self.u_y,
               "u_xxy": self.u_xxy, "kappa_y": self.kappa_y, "tau_grad": self.tau_grad,
               "xi": None if self.xi is None else [float(v) for v in self.xi]}
        out["checks"] = dict(self.checks)
        return out

    @property
    def signs_ok(self) -> bool:
        """u_xxy > 0 and kappa_y < 0 with a 10 tau_grad margin."""
        m = 10 * self.tau_grad
        return bool(self.u_xxy > m and self.kappa_y < -m)


def _normalized_jet(field: ScalarField, domain: DomainSpec, t: float) -> tuple[Jet3, object]:
    bp = domain.boundary_point_t(t)
    jet = field.jet(bp.point, t)
    return jet.transformed(bp.frame(), bp.point), bp


def _report_at(field, domain, t, case, tau_grad) -> DegenerateBoundaryReport:
    n, bp = _normalized_jet(field, domain, t)
    ky = float(levelset_curvature_dy(n))
    return DegenerateBoundaryReport(tuple(map(float, bp.point)), float(t), n.ux, n.uxx, n.uxy, n.uy,
                                    n.uxxy, ky, case, None, {}, float(tau_grad))


def degenerate_boundary_analysis(field: ScalarField, domain: DomainSpec, site: ZeroCurvatureRecord,
                                 tau_grad: float | None = None, n_samples: int = 20) -> DegenerateBoundaryReport:
    """Jet quantities at a zero-curvature site in the frame with tangent x-axis
    and the domain in {y < 0}.

    For segments the interior branch of N_theta (theta along the segment) is
    traced; its end on the segment is xi.  The sign pattern of u_xy along the
    segment and u_xxy(xi) are reported in ``checks``.
    """
    tau_grad = _tau_grad(field) if tau_grad is None else tau_grad
    if site.kind == "isolated":
        rep0 = _report_at(field, domain, site.t0, "case1_uxy_nonzero", tau_grad)
        rep0.case = "case2_uxy_zero" if abs(rep0.u_xy) <= tau_grad else "case1_uxy_nonzero"
        rep0.checks = {"hopf": bool(rep0.u_y < 0), "flat": bool(max(abs(rep0.u_x), abs(rep0.u_xx)) <= tau_grad)}
        return rep0
    h = field.mesh.h
    t0, t1 = site.t0, site.t1 if site.t1 > site.t0 else site.t1 + 1.0
    s0 = float(domain.s_of_t(site.t0))
    length = float(site.s1 - site.s0) % domain.perimeter
    seg = domain.curve.point(np.array([t0, t1 % 1.0]))
    tan = seg[1] - seg[0]
    theta = float(np.arctan2(tan[1], tan[0]))
    curves = trace_nodal_set(field, theta)
    gamma = domain.curve.point(np.linspace(t0, t1, 200) % 1.0)
    from .geometry import polyline_distance

    entries = []
    for c in curves:
        dist = polyline_distance(c.polyline, gamma, closed=False)
        if np.all(dist <= 2 * h):
            continue  # the contour lying on the segment itself
        for end in c.endpoints:
            q = np.asarray(end.point)
            if polyline_distance(q[None], gamma, closed=False)[0] <= 2 * h:
                entries.append(q)
    distinct: list[np.ndarray] = []
    for q in entries:
        if all(np.linalg.norm(q - r) > 2 * h for r in distinct):
            distinct.append(q)
    if not distinct:
        raise NoXi("no interior branch of the nodal set meets the segment")
    if len(distinct) > 1:
        raise MultipleXi(f"{len(distinct)} interior branches meet the segment: "
                         + ", ".join(str(np.round(q, 4).tolist()) for q in distinct))
    txi = float(domain.nearest_t(distinct[0])[0])
    rep = _report_at(field, domain, txi, "segment", tau_grad)
    rep.xi = rep.location
    # samples of the segment, by normalized x coordinate relative to xi
    # (the frame's x-axis runs against the counterclockwise direction)
    sxi = float(domain.s_of_t(txi))
    ss = s0 + (np.arange(n_samples) + 0.5) / n_samples * length
    ts = domain.t_of_s(np.mod(ss, domain.perimeter))
    R = domain.boundary_point_t(txi).frame()
    xs = (domain.curve.point(ts) - np.asarray(rep.location)) @ R[0]
    vals = np.array([_normalized_jet(field, domain, float(t))[0].array for t in ts])
    uxy = vals[:, 4]
    left, right = uxy[xs < -2 * h], uxy[xs > 2 * h]
    sign_l = int(np.sign(np.median(left))) if len(left) else 0
    sign_r = int(np.sign(np.median(right))) if len(right) else 0
    uniform = bool(len(left) and len(right) and np.all(np.sign(left) == sign_l)
                   and np.all(np.sign(right) == sign_r))
    rep.checks = {
        "xi_s": sxi,
        "midpoint_offset": float(abs(sxi - (s0 + 0.5 * length))),
        "uxy_sign_left": sign_l,
        "uxy_sign_right": sign_r,
        "uxy_sign_change": bool(uniform and sign_l * sign_r < 0),
        "uxxy_positive": bool(rep.u_xxy > 10 * tau_grad),
        "hopf": bool(np.all(vals[:, 2] < 0)),
        "max_abs_ux": float(np.abs(vals[:, 1]).max()),
        "max_abs_uxx": float(np.abs(vals[:, 3]).max()),
        "flat": bool(max(np.abs(vals[:, 1]).max(), np.abs(vals[:, 3]).max()) <= 10 * tau_grad),
    }
    return rep
