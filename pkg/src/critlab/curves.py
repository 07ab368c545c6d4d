"""Closed parametric boundary curves.

Every curve is periodic in its parameter ``t`` with period 1 and oriented
counterclockwise.  ``eval(t)`` returns position and the first two parameter
derivatives, each of shape ``(n, 2)``.  ``breaks`` lists parameters where the
speed may jump (piece joins); quadrature tables split panels there.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, fsolve

from .errors import InvalidParams

TWO_PI = 2.0 * np.pi


def _col(*arrs):
    return np.stack(arrs, axis=-1)


class Curve:
    breaks: tuple[float, ...] = ()

    def eval(self, t):
        raise NotImplementedError

    def point(self, t):
        return self.eval(t)[0]


class EllipseCurve(Curve):
    def __init__(self, a: float, b: float, center=(0.0, 0.0)):
        self.a, self.b = float(a), float(b)
        self.center = np.asarray(center, dtype=float)

    def eval(self, t):
        phi = TWO_PI * np.asarray(t, dtype=float)
        c, s = np.cos(phi), np.sin(phi)
        w = TWO_PI
        r = _col(self.a * c, self.b * s) + self.center
        r1 = w * _col(-self.a * s, self.b * c)
        r2 = w * w * _col(-self.a * c, -self.b * s)
        return r, r1, r2


class SuperellipseCurve(Curve):
    """|x/a|^p + |y/b|^p = 1 parametrized by the polar angle."""

    def __init__(self, p: float, a: float = 1.0, b: float = 1.0):
        self.p, self.a, self.b = float(p), float(a), float(b)

    def eval(self, t):
        p = self.p
        phi = TWO_PI * np.asarray(t, dtype=float)
        c, s = np.cos(phi), np.sin(phi)
        ca, sb = c / self.a, s / self.b

        def g0(v):
            return np.abs(v) ** p

        def g1(v):
            return p * np.abs(v) ** (p - 1) * np.sign(v)

        def g2(v):
            return p * (p - 1) * np.abs(v) ** (p - 2)

        G = g0(ca) + g0(sb)
        dca, dsb = -s / self.a, c / self.b
        G1 = g1(ca) * dca + g1(sb) * dsb
        G2 = g2(ca) * dca**2 - g1(ca) * c / self.a + g2(sb) * dsb**2 - g1(sb) * s / self.b
        q = -1.0 / p
        r = G**q
        r_1 = q * G ** (q - 1) * G1
        r_2 = q * (q - 1) * G ** (q - 2) * G1**2 + q * G ** (q - 1) * G2
        w = TWO_PI
        pos = _col(r * c, r * s)
        d1 = w * _col(r_1 * c - r * s, r_1 * s + r * c)
        d2 = w * w * _col(r_2 * c - 2 * r_1 * s - r * c, r_2 * s + 2 * r_1 * c - r * s)
        return pos, d1, d2


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def _bump(x):
    return np.where(np.abs(x) < 1.0, (1.0 - np.minimum(x * x, 1.0)) ** 3, 0.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _gl(lo, hi, fn):
    """Gauss-Legendre integral of fn over each [lo_i, hi_i]."""
    mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = mid[..., None] + rad[..., None] * _GL_X
    return rad * np.sum(_GL_W * fn(nodes), axis=-1)


def _panel_edges(knots, n_per_piece):
    knots = np.unique(np.asarray(knots, float))
    parts = [np.linspace(knots[i], knots[i + 1], n_per_piece + 1)[:-1] for i in range(len(knots) - 1)]
    return np.concatenate(parts + [knots[-1:]])


def _trace(kappa, knots, theta0, n_per_piece):
    """Tangent angle and position at panel edges for a curvature profile."""
    edges = _panel_edges(knots, n_per_piece)
    lo, hi = edges[:-1], edges[1:]
    th = theta0 + np.concatenate([[0.0], np.cumsum(_gl(lo, hi, kappa))])

    def theta_at(nodes):
        base = lo[:, None] + 0.0 * nodes
        return th[:-1, None] + _gl(base, nodes, kappa)

    dx = _gl(lo, hi, lambda n: np.cos(theta_at(n)))
    dy = _gl(lo, hi, lambda n: np.sin(theta_at(n)))
    x = np.concatenate([[0.0], np.cumsum(dx)])
    y = np.concatenate([[0.0], np.cumsum(dy)])
    return edges, th, x, y


class CurvatureCurve(Curve):
    """Closed curve given by its curvature as a function of arclength.

    The parameter is normalized arclength t = sigma / S.  Positions come from
    high-order quadrature of the tangent angle on panels aligned with the
    profile knots, where the curvature is smooth.
    """

    def __init__(self, kappa, S: float, knots, theta0: float, start=(0.0, 0.0),
                 n_per_piece: int = 200):
        self.kappa_sigma = kappa
        self.S = float(S)
        self.theta0 = float(theta0)
        self._edges, self._th, x, y = _trace(kappa, knots, theta0, n_per_piece)
        self._x = x + start[0]
        self._y = y + start[1]
        self.closure_error = float(np.hypot(x[-1], y[-1]))
        kn = np.asarray(knots, float) / self.S
        self.breaks = tuple(float(k) for k in np.unique(kn) if 1e-12 < k < 1.0 - 1e-12)

    def _state(self, sig):
        sig = np.mod(np.asarray(sig, float), self.S)
        e = self._edges
        i = np.clip(np.searchsorted(e, sig, side="right") - 1, 0, len(e) - 2)
        lo = e[i]

        def theta_at(nodes):
            base = lo[:, None] + 0.0 * nodes
            return self._th[i][:, None] + _gl(base, nodes, self.kappa_sigma)

        th = self._th[i] + _gl(lo, sig, self.kappa_sigma)
        x = self._x[i] + _gl(lo, sig, lambda n: np.cos(theta_at(n)))
        y = self._y[i] + _gl(lo, sig, lambda n: np.sin(theta_at(n)))
        return th, x, y

    def eval(self, t):
        t = np.atleast_1d(np.mod(np.asarray(t, dtype=float), 1.0))
        sig = t * self.S
        th, x, y = self._state(sig)
        k = self.kappa_sigma(sig)
        S = self.S
        c, s = np.cos(th), np.sin(th)
        return _col(x, y), S * _col(c, s), S * S * k[:, None] * _col(-s, c)


def stadium_curve(L: float, r_bottom: float, r_corner: float, ramp: float,
                  zero_at: float | None = None, zero_width: float = 0.3) -> CurvatureCurve:
    """Convex curve with one straight segment of length L.

    Half profile from the bottom symmetry point: arc of radius ``r_bottom``,
    quintic ramp to curvature ``1/r_corner``, corner arc, quintic taper to 0
    and half the straight segment.  The bottom arc length closes the curve.
    ``zero_at`` (a fraction of the bottom arc) multiplies the bottom arc by a
    C2 factor with a double zero, adding two isolated zero-curvature points.
    The segment is placed on y = 0, centred at the origin, domain below.
    """
    if min(L, r_bottom, r_corner, ramp) <= 0:
        raise InvalidParams("profile lengths and radii must be positive")
    kb, kc, w = 1.0 / r_bottom, 1.0 / r_corner, float(ramp)

    def profile(a):
        def bottom(sig):
            if zero_at is None:
                return np.full_like(sig, kb)
            return kb * (1.0 - _bump((sig - zero_at * a) / (zero_width * a)))

        bottom_knots = [0.0, a]
        if zero_at is not None:
            bottom_knots += [a * (zero_at + v) for v in (-zero_width, 0.0, zero_width)]
        bottom_knots = [k for k in bottom_knots if 0.0 <= k <= a]
        edges = _panel_edges(bottom_knots, 8)
        bottom_turn = float(np.sum(_gl(edges[:-1], edges[1:], bottom)))
        corner = (np.pi - bottom_turn - 0.5 * w * (kb + kc) - 0.5 * w * kc) / kc
        if corner < 0:
            return None
        b = a + w + corner
        half = b + w + 0.5 * L

        def kappa(sig):
            sig = np.mod(sig, 2 * half)
            sig = np.where(sig > half, 2 * half - sig, sig)
            k = np.where(sig < a, bottom(sig), 0.0)
            k = np.where((sig >= a) & (sig < a + w), kb + (kc - kb) * _smoothstep((sig - a) / w), k)
            k = np.where((sig >= a + w) & (sig < b), kc, k)
            k = np.where((sig >= b) & (sig < b + w), kc * (1.0 - _smoothstep((sig - b) / w)), k)
            return k

        knots = bottom_knots + [a + w, b, b + w, half]
        return kappa, half, sorted(set(knots))

    def gap(a):
        pr = profile(a)
        if pr is None:
            return np.nan
        kappa, half, knots = pr
        _, _, x, _ = _trace(kappa, knots, 0.0, 12)
        return x[-1]

    a_hi = np.pi / kb
    grid = np.linspace(1e-3 * a_hi, a_hi, 60)
    vals = np.array([gap(a) for a in grid])
    root = None
    for i in range(len(grid) - 1):
        if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and vals[i] * vals[i + 1] < 0:
            root = brentq(gap, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15)
            break
    if root is None:
        raise InvalidParams("curvature profile cannot close with these parameters")
    kappa, half, knots = profile(root)
    full = sorted(set(knots + [2 * half - k for k in knots]))
    _, _, x, y = _trace(kappa, knots, 0.0, 200)
    # bottom point chosen so that the segment midpoint lands on the origin
    return CurvatureCurve(kappa, 2 * half, full, 0.0, start=(-x[-1], -y[-1]))


def dumbbell_curve(d: float, w: float, ramp: float = 0.3) -> CurvatureCurve:
    """Two unit lobes centred at (+-d, 0) joined by a concave neck of half-width w.

    Quarter profile from the right tip: unit-curvature lobe arc, quintic ramp
    to a constant negative neck curvature, neck arc ending horizontally at
    (0, w).  The lobe arc length and neck curvature are solved for; the rest
    follows by reflection in both axes.
    """
    r = float(ramp)

    def profile(A, kn):
        B = (A + 0.5 * r * (1.0 - kn) - 0.5 * np.pi) / kn
        if B < 0 or A < 0 or kn <= 0:
            return None
        Q = A + r + B

        def kappa(sig):
            sig = np.mod(sig, 2 * Q)
            sig = np.where(sig > Q, 2 * Q - sig, sig)
            k = np.where(sig < A, 1.0, -kn)
            return np.where((sig >= A) & (sig < A + r), 1.0 + (-kn - 1.0) * _smoothstep((sig - A) / r), k)

        return kappa, Q, [0.0, A, A + r, Q]

    def resid(v):
        pr = profile(*v)
        if pr is None:
            return np.array([1e3, 1e3])
        kappa, Q, knots = pr
        _, _, x, y = _trace(kappa, knots, 0.5 * np.pi, 12)
        return np.array([d + 1.0 + x[-1], y[-1] - w])

    best = None
    for A0 in np.linspace(0.6, 2.8, 12):
        for kn0 in (0.3, 0.8, 1.5, 3.0):
            sol, info, ier, _ = fsolve(resid, [A0, kn0], full_output=True, xtol=1e-14)
            if ier == 1 and np.abs(resid(sol)).max() < 1e-11:
                best = sol
                break
        if best is not None:
            break
    if best is None:
        raise InvalidParams(f"no dumbbell with d={d}, w={w}")
    kappa, Q, knots = profile(*best)
    full = sorted(set(knots + [2 * Q - k for k in knots] + [2 * Q + k for k in knots]
                      + [4 * Q - k for k in knots]))
    curve = CurvatureCurve(kappa, 4 * Q, full, 0.5 * np.pi, start=(d + 1.0, 0.0))
    curve.neck_curvature = float(best[1])
    curve.lobe_arc = float(best[0])
    return curve


class SplineCurve(Curve):
    """Periodic cubic spline through user points, chord-length parametrized."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 5:
            raise InvalidParams("spline boundary needs at least 5 points (x, y)")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        area = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
        if area < 0:
            pts = pts[::-1]
        closed = np.vstack([pts, pts[:1]])
        chord = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        if np.any(chord <= 0):
            raise InvalidParams("repeated spline points")
        u = np.concatenate([[0.0], np.cumsum(chord)]) / chord.sum()
        self.points = pts
        self._sx = CubicSpline(u, closed[:, 0], bc_type="periodic")
        self._sy = CubicSpline(u, closed[:, 1], bc_type="periodic")

    def eval(self, t):
        t = np.mod(np.asarray(t, dtype=float), 1.0)
        r = _col(self._sx(t), self._sy(t))
        r1 = _col(self._sx(t, 1), self._sy(t, 1))
        r2 = _col(self._sx(t, 2), self._sy(t, 2))
        return r, r1, r2
