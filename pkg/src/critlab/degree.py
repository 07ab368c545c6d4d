"""The vector field T = adj(Hess u) grad u, its winding on loops, its zeros
and their indices."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateJacobian, VanishingGradient, ZeroOnLoop
from .geometry import RegionLoop
from .jets import Jet3, ScalarField

log = logging.getLogger(__name__)

KINDS = ("critical_point_of_u", "m_theta_point", "unresolved")


def _cols(J):
    """Accept a Jet3 or an (n, 10) / (10,) array of jet components."""
    if isinstance(J, Jet3):
        return J.array, True
    A = np.asarray(J, float)
    return A, A.ndim == 1


def t_field(jet):
    """T = (u_yy u_x - u_xy u_y, u_xx u_y - u_xy u_x)."""
    A, single = _cols(jet)
    A = np.atleast_2d(A)
    ux, uy, uxx, uxy, uyy = A[:, 1], A[:, 2], A[:, 3], A[:, 4], A[:, 5]
    T = np.stack([uyy * ux - uxy * uy, uxx * uy - uxy * ux], axis=1)
    return T[0] if single else T


def jac_t(jet):
    """Jacobian of T (rows: components of T, columns: d/dx, d/dy)."""
    A, single = _cols(jet)
    A = np.atleast_2d(A)
    ux, uy, uxx, uxy, uyy, uxxx, uxxy, uxyy, uyyy = (A[:, k] for k in range(1, 10))
    dh = uxx * uyy - uxy**2
    J = np.empty((len(A), 2, 2))
    J[:, 0, 0] = dh + ux * uxyy - uy * uxxy
    J[:, 0, 1] = ux * uyyy - uy * uxyy
    J[:, 1, 0] = uy * uxxx - ux * uxxy
    J[:, 1, 1] = dh + uy * uxxy - ux * uxyy
    return J[0] if single else J


def levelset_curvature(jet, tau_grad: float = 1e-12):
    """Curvature of the level line through the point, positive where it is convex."""
    A, single = _cols(jet)
    A = np.atleast_2d(A)
    ux, uy, uxx, uxy, uyy = A[:, 1], A[:, 2], A[:, 3], A[:, 4], A[:, 5]
    g = np.hypot(ux, uy)
    if np.any(g <= tau_grad):
        raise VanishingGradient("level-set curvature needs a nonzero gradient")
    k = -(uyy * ux**2 - 2 * uxy * ux * uy + uxx * uy**2) / g**3
    return float(k[0]) if single else k


def levelset_curvature_dy(jet, tau_grad: float = 1e-12):
    """y-derivative of the level-set curvature."""
    A, single = _cols(jet)
    A = np.atleast_2d(A)
    ux, uy, uxx, uxy, uyy, uxxx, uxxy, uxyy, uyyy = (A[:, k] for k in range(1, 10))
    g2 = ux**2 + uy**2
    if np.any(np.sqrt(g2) <= tau_grad):
        raise VanishingGradient("level-set curvature needs a nonzero gradient")
    N = uyy * ux**2 - 2 * uxy * ux * uy + uxx * uy**2
    Ny = (uyyy * ux**2 + 2 * uyy * ux * uxy
          - 2 * (uxyy * ux * uy + uxy**2 * uy + uxy * ux * uyy)
          + uxxy * uy**2 + 2 * uxx * uy * uyy)
    gy = ux * uxy + uy * uyy
    k = -Ny / g2**1.5 + 3 * N * gy / g2**2.5
    return float(k[0]) if single else k


# -- winding ---------------------------------------------------------------

@dataclass(eq=False)
class LoopSamples:
    u: np.ndarray
    points: np.ndarray
    values: np.ndarray


@dataclass(eq=False)
class WindingResult:
    winding: int
    min_norm: float
    total_angle: float
    samples: LoopSamples = field(repr=False)


def _angles(V):
    a, b = V, np.roll(V, -1, axis=0)
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = (a * b).sum(1)
    return np.arctan2(cross, dot)


def sample_loop(sampler, loop: RegionLoop | None, n: int = 256, max_rounds: int = 20,
                breaks=()) -> LoopSamples:
    """Sample V around the loop, bisecting wherever the angle step exceeds pi/2."""
    u = np.arange(n) / n
    extra = list(breaks) + (list(loop.breakpoints()) if loop is not None else [])
    if extra:
        u = np.unique(np.concatenate([u, np.mod(extra, 1.0)]))
    P, V = sampler(u)
    for _ in range(max_rounds):
        bad = np.abs(_angles(V)) > 0.5 * np.pi
        if not bad.any():
            break
        i = np.flatnonzero(bad)
        un = np.concatenate([u, [1.0]])
        mid = 0.5 * (un[i] + un[i + 1])
        Pm, Vm = sampler(mid)
        order = np.argsort(np.concatenate([u, mid]), kind="stable")
        u = np.concatenate([u, mid])[order]
        P = np.concatenate([P, Pm])[order]
        V = np.concatenate([V, Vm])[order]
    return LoopSamples(u, P, V)


def winding_number(sampler, loop: RegionLoop | None = None, tau: float = 0.0, n: int = 256,
                   samples: LoopSamples | None = None) -> WindingResult:
    """Winding number of V around a loop.

    ``sampler(u)`` maps loop parameters in [0, 1) to (points, vectors).
    Raises ZeroOnLoop when min |V| over the samples is at most ``tau``.
    """
    s = samples if samples is not None else sample_loop(sampler, loop, n)
    norms = np.linalg.norm(s.values, axis=1)
    k = int(np.argmin(norms))
    if norms[k] <= tau:
        raise ZeroOnLoop(f"|V| = {norms[k]:.3e} on the loop", float(norms[k]), s.points[k])
    if np.any(np.abs(_angles(s.values)) > 0.5 * np.pi):
        raise ZeroOnLoop("angle increments could not be resolved", float(norms[k]), s.points[k])
    total = float(_angles(s.values).sum())
    w = int(np.rint(total / (2 * np.pi)))
    return WindingResult(w, float(norms[k]), total, s)


def field_sampler(field: ScalarField, loop: RegionLoop, fn=t_field):
    """Sampler evaluating fn(jet) along loop; boundary pieces use trace-constrained jets."""
    cache: dict[float, tuple] = {}

    def sampler(u):
        u = np.asarray(u, float)
        todo = [x for x in u if x not in cache]
        if todo:
            pts, tb = loop.evaluate(np.array(todo))
            J = field.jets(pts, tb)
            vals = np.atleast_2d(fn(J))
            for x, p, v, j in zip(todo, pts, vals, J):
                cache[x] = (p, v, j)
        P = np.array([cache[x][0] for x in u])
        V = np.array([cache[x][1] for x in u])
        return P, V

    sampler.cache = cache
    return sampler


# -- homotopy --------------------------------------------------------------

@dataclass(frozen=True)
class HomotopyCertificate:
    ok: bool
    min_abs_H: float
    witness: tuple[float, tuple[float, float]] | None
    tau_H: float


def _bilinear_zero(Q: np.ndarray, T: np.ndarray):
    """First zero (t, k, s) of the homotopy interpolated linearly between samples k and k+1.

    On each interval H = a + b t + c s + d t s is bilinear; a zero needs
    cross(a + c s, b + d s) = 0, a quadratic in s.  Zeros strictly between
    samples are invisible to the per-sample minimum, so they are found here.
    """
    def cross(u, v):
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

    Q1, T1 = np.roll(Q, -1, axis=0), np.roll(T, -1, axis=0)
    a, b, c = Q, T - Q, Q1 - Q
    d = (T1 - Q1) - b
    A2, A1, A0 = cross(c, d), cross(a, d) + cross(c, b), cross(a, b)
    scale = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) + 1e-300
    for k in range(len(Q)):
        if abs(A2[k]) > 1e-14 * scale[k]:
            disc = A1[k] ** 2 - 4 * A2[k] * A0[k]
            if disc < 0:
                continue
            r = np.sqrt(disc)
            roots = ((-A1[k] - r) / (2 * A2[k]), (-A1[k] + r) / (2 * A2[k]))
        elif abs(A1[k]) > 1e-14 * scale[k]:
            roots = (-A0[k] / A1[k],)
        else:
            continue
        for s in roots:
            if not 0.0 <= s <= 1.0:
                continue
            u, v = a[k] + c[k] * s, b[k] + d[k] * s
            vv = float(v @ v)
            if vv == 0.0:
                continue
            t = -float(u @ v) / vv
            if 0.0 <= t <= 1.0 and np.linalg.norm(u + t * v) <= 1e-9 * (np.linalg.norm(u) + 1e-300):
                return float(t), k, float(s)
    return None


def homotopy_admissible(samples: LoopSamples, p, tau_H: float, n_t: int = 21) -> HomotopyCertificate:
    """Check H(t, q) = t T(q) + (1 - t)(q - p) stays away from zero on the loop."""
    p = np.asarray(p, float)
    Q = samples.points - p
    T = samples.values
    best = (np.inf, None)
    for t in np.linspace(0.0, 1.0, n_t):
        H = np.linalg.norm(t * T + (1 - t) * Q, axis=1)
        k = int(np.argmin(H))
        if H[k] < best[0]:
            best = (float(H[k]), (float(t), tuple(map(float, samples.points[k]))))
    # exact minimum over t in [0, 1] per sample point
    D = T - Q
    dd = (D**2).sum(1)
    ts = np.clip(-(Q * D).sum(1) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
    H = np.linalg.norm(Q + ts[:, None] * D, axis=1)
    k = int(np.argmin(H))
    if H[k] < best[0]:
        best = (float(H[k]), (float(ts[k]), tuple(map(float, samples.points[k]))))
    hit = _bilinear_zero(Q, T)
    if hit is not None:
        t, k, s = hit
        q = (1 - s) * samples.points[k] + s * samples.points[(k + 1) % len(Q)]
        best = (0.0, (t, tuple(map(float, q))))
    ok = best[0] > tau_H
    return HomotopyCertificate(bool(ok), best[0], None if ok else best[1], float(tau_H))


# -- zeros -----------------------------------------------------------------

@dataclass(eq=False)
class ZeroRecord:
    point: np.ndarray
    kind: str
    theta: float | None
    index: int
    jet: Jet3 = field(repr=False)
    grad_norm: float = 0.0
    t_norm: float = 0.0
    det_jac: float = 0.0

    def to_dict(self) -> dict:
        return {"x": float(self.point[0]), "y": float(self.point[1]), "kind": self.kind,
                "theta": None if self.theta is None else float(self.theta), "index": int(self.index)}


def classify_zero(jet: Jet3, tau_grad: float):
    g = float(np.hypot(jet.ux, jet.uy))
    if g <= tau_grad:
        return "critical_point_of_u", None
    theta = float(np.arctan2(-jet.ux, jet.uy))  # e_theta = (u_y, -u_x) / |grad u|
    e = np.array([np.cos(theta), np.sin(theta)])
    grad_ut = jet.hessian() @ e
    if g > 10 * tau_grad and np.linalg.norm(grad_ut) <= tau_grad:
        return "m_theta_point", theta % (2 * np.pi)
    return "unresolved", theta % (2 * np.pi)


def index_of_zero(record: ZeroRecord, rel_tol: float = 1e-8, strict: bool = False) -> int:
    """Sign of det Jac_T, cross-checked against the closed form for the kind of zero.

    A near-singular Jacobian or a disagreement with the closed form gives 0
    (or raises DegenerateJacobian when ``strict``).
    """
    jet = record.jet
    J = jac_t(jet)
    det = float(np.linalg.det(J))
    scale = float((J**2).sum())
    if record.kind == "unresolved":
        return 0
    if abs(det) <= rel_tol * max(scale, 1e-300):
        if strict:
            raise DegenerateJacobian(f"|det Jac_T| = {abs(det):.3e}")
        return 0
    if record.kind == "critical_point_of_u":
        closed = float(np.linalg.det(jet.hessian())) ** 2
    else:
        th = record.theta
        r = jet.transformed(np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]]))
        closed = -r.uy**2 * (r.uxxy**2 - r.uxxx * r.uxyy)
    if np.sign(closed) != np.sign(det):
        log.warning("index closed form disagrees at %s (%s)", record.point, record.kind)
        if strict:
            raise DegenerateJacobian("closed-form determinant disagrees in sign")
        return 0
    return int(np.sign(det))


def _newton_zero(field: ScalarField, q0, step_cap: float, max_iters: int = 30):
    q = np.asarray(q0, float).copy()
    for _ in range(max_iters):
        J = field.fit(q)
        T = t_field(J)
        A = jac_t(J)
        try:
            dq = -np.linalg.solve(A, T)
        except np.linalg.LinAlgError:
            return q, False
        n = np.linalg.norm(dq)
        if n > step_cap:
            dq *= step_cap / n
        q = q + dq
        if n < 1e-12:
            return q, True
    return q, bool(np.linalg.norm(dq) < 1e-9)


@dataclass(eq=False)
class DegreeReport:
    winding: int
    index_sum: int
    consistent: bool
    zeros: list[ZeroRecord]
    min_T_on_loop: float
    samples: LoopSamples | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"winding": int(self.winding), "index_sum": int(self.index_sum),
                "consistent": bool(self.consistent),
                "zeros": [z.to_dict() for z in self.zeros]}


def find_t_zeros(field: ScalarField, loop: RegionLoop, seed_grid_h: float | None = None,
                 tau_T: float | None = None, tau_grad: float | None = None,
                 seed_fraction: float = 0.25) -> list[ZeroRecord]:
    """Zeros of T inside the loop: grid seeds at local minima of |T|, Newton polish."""
    h = field.mesh.h
    g = 2 * h if seed_grid_h is None else float(seed_grid_h)
    J = field.vertex_jets()
    Tmax = float(np.linalg.norm(t_field(J), axis=1).max())
    gmax = float(np.hypot(J[:, 1], J[:, 2]).max())
    tau_T = 10 * h * h * Tmax if tau_T is None else tau_T
    tau_grad = 10 * h * h * gmax if tau_grad is None else tau_grad
    poly = loop.polyline(max(256, int(loop.length / (0.5 * h))))
    lo, hi = poly.min(0), poly.max(0)
    xs = np.arange(lo[0] + 0.5 * g, hi[0], g)
    ys = np.arange(lo[1] + 0.5 * g, hi[1], g)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    G = np.stack([X.ravel(), Y.ravel()], 1)
    from .geometry import points_in_polygon
    inside = points_in_polygon(G, poly)
    normT = np.full(len(G), np.inf)
    normT[inside] = np.linalg.norm(t_field(field.jets(G[inside])), axis=1)
    N = normT.reshape(X.shape)
    pad = np.pad(N, 1, constant_values=np.inf)
    is_min = np.isfinite(N)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= N <= pad[1 + di:1 + di + N.shape[0], 1 + dj:1 + dj + N.shape[1]]
    is_min &= N <= seed_fraction * Tmax
    seeds = np.stack([X[is_min], Y[is_min]], 1)
    out: list[ZeroRecord] = []
    for s in seeds:
        q, conv = _newton_zero(field, s, step_cap=g)
        if not conv or not points_in_polygon(q[None], poly)[0]:
            continue
        if any(np.linalg.norm(q - z.point) < 0.5 * g for z in out):
            continue
        jet = field.jet(q)
        tn = float(np.linalg.norm(t_field(jet)))
        if tn > tau_T:
            continue
        kind, theta = classify_zero(jet, tau_grad)
        rec = ZeroRecord(q, kind, theta, 0, jet, float(np.hypot(jet.ux, jet.uy)), tn,
                         float(np.linalg.det(jac_t(jet))))
        rec.index = index_of_zero(rec)
        out.append(rec)
    out.sort(key=lambda z: (round(float(z.point[0]), 9), round(float(z.point[1]), 9)))
    return out


def degree_report(field: ScalarField, loop: RegionLoop, seed_grid_h: float | None = None,
                  tau_T: float | None = None, tau_grad: float | None = None,
                  n_samples: int = 256) -> DegreeReport:
    h = field.mesh.h
    J = field.vertex_jets()
    Tmax = float(np.linalg.norm(t_field(J), axis=1).max())
    tau_T = 10 * h * h * Tmax if tau_T is None else tau_T
    samp = sample_loop(field_sampler(field, loop), loop, n_samples)
    wr = winding_number(None, loop, tau_T, samples=samp)
    zeros = find_t_zeros(field, loop, seed_grid_h, tau_T, tau_grad)
    isum = int(sum(z.index for z in zeros))
    resolved = all(z.kind != "unresolved" and z.index != 0 for z in zeros)
    return DegreeReport(wr.winding, isum, bool(resolved and isum == wr.winding), zeros,
                        wr.min_norm, samp)
