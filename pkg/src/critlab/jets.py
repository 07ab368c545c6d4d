"""Local derivative recovery (third-order jets) from vertex values.

A weighted least-squares polynomial of total degree four is fitted around
the evaluation point.  Fields that solve a Dirichlet problem can also use

* residual rows: the Laplacian of the fit matched to -f(u) at neighbours,
* boundary rows: zero values at dense points of the exact boundary curve,
* at boundary points, hard trace constraints implied by u = 0 on a curve
  with known curvature (and by the equation when the nonlinearity is known).

Without that context the fit is plain moving least squares and reproduces
polynomials of degree four exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.linalg import null_space
from scipy.spatial import cKDTree

from .errors import IllConditionedFit, InsufficientNeighbors

JET_KEYS = ("u", "ux", "uy", "uxx", "uxy", "uyy", "uxxx", "uxxy", "uxyy", "uyyy")
_ORDER = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]


@dataclass(frozen=True)
class Jet3:
    """Value and partial derivatives up to order three at a point."""

    point: np.ndarray
    u: float
    ux: float
    uy: float
    uxx: float
    uxy: float
    uyy: float
    uxxx: float
    uxxy: float
    uxyy: float
    uyyy: float

    @classmethod
    def from_array(cls, point, arr) -> "Jet3":
        return cls(np.asarray(point, float), *map(float, arr))

    @property
    def array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in JET_KEYS])

    def gradient(self) -> np.ndarray:
        return np.array([self.ux, self.uy])

    def hessian(self) -> np.ndarray:
        return np.array([[self.uxx, self.uxy], [self.uxy, self.uyy]])

    def third(self) -> np.ndarray:
        T = np.empty((2, 2, 2))
        vals = {0: self.uxxx, 1: self.uxxy, 2: self.uxyy, 3: self.uyyy}
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    T[i, j, k] = vals[i + j + k]
        return T

    def transformed(self, R: np.ndarray, origin=None) -> "Jet3":
        """Jet of v(xi) = u(origin + R^T xi), i.e. coordinates xi = R (x - origin)."""
        R = np.asarray(R, float)
        origin = self.point if origin is None else np.asarray(origin, float)
        g = R @ self.gradient()
        H = R @ self.hessian() @ R.T
        T = np.einsum("ai,bj,ck,ijk->abc", R, R, R, self.third())
        return Jet3(R @ (self.point - origin), self.u, g[0], g[1], H[0, 0], H[0, 1], H[1, 1],
                    T[0, 0, 0], T[0, 0, 1], T[0, 1, 1], T[1, 1, 1])


def rotate_jet(jet: Jet3, angle: float) -> Jet3:
    """Jet in coordinates rotated by ``angle`` (new x-axis along (cos, sin))."""
    c, s = np.cos(angle), np.sin(angle)
    return jet.transformed(np.array([[c, s], [-s, c]]), jet.point)


def polynomial_jet(coeffs: dict, point) -> Jet3:
    """Exact jet of sum c_ij x^i y^j at point (used by tests and synthetic fields)."""
    x, y = map(float, point)
    out = []
    for a, b in _ORDER:
        v = 0.0
        for (i, j), c in coeffs.items():
            if i >= a and j >= b:
                v += c * (factorial(i) // factorial(i - a)) * (factorial(j) // factorial(j - b)) \
                    * x ** (i - a) * y ** (j - b)
        out.append(v)
    return Jet3.from_array(point, out)


@dataclass(frozen=True)
class JetConfig:
    degree: int = 4
    multiplier: float = 3.5
    min_radius: float = 0.25
    pde_weight: float = 1.0
    boundary_weight: float = 10.0
    min_neighbors: int = 30
    cond_max: float = 1e12


def _exponents(deg: int):
    return [(i, d - i) for d in range(deg + 1) for i in range(d, -1, -1)]


class _Basis:
    def __init__(self, deg: int):
        self.exps = _exponents(deg)
        self.ei = np.array([e[0] for e in self.exps])
        self.ej = np.array([e[1] for e in self.exps])
        self.fact = np.array([factorial(i) * factorial(j) for i, j in self.exps], float)
        self.deg = deg
        self.cxx = (self.ei * (self.ei - 1)).astype(float)
        self.cyy = (self.ej * (self.ej - 1)).astype(float)

    def _powers(self, xi):
        n = self.deg + 1
        px = np.ones((len(xi), n))
        py = np.ones((len(xi), n))
        for k in range(1, n):
            px[:, k] = px[:, k - 1] * xi[:, 0]
            py[:, k] = py[:, k - 1] * xi[:, 1]
        return px, py

    def values(self, xi):
        px, py = self._powers(xi)
        return px[:, self.ei] * py[:, self.ej]

    def laplacian(self, xi):
        px, py = self._powers(xi)
        a = self.cxx * px[:, np.maximum(self.ei - 2, 0)] * py[:, self.ej]
        b = self.cyy * px[:, self.ei] * py[:, np.maximum(self.ej - 2, 0)]
        return a + b

    def deriv_row(self, a: int, b: int, R: float) -> np.ndarray:
        """Row mapping coefficients to the physical derivative D^(a,b) at the centre."""
        row = np.zeros(len(self.exps))
        for k, (i, j) in enumerate(self.exps):
            if i == a and j == b:
                row[k] = self.fact[k] / R ** (a + b)
        return row


_BASES: dict[int, _Basis] = {}


def _basis(deg: int) -> _Basis:
    if deg not in _BASES:
        _BASES[deg] = _Basis(deg)
    return _BASES[deg]


class ScalarField:
    """Vertex values on a mesh plus what is known about the problem they solve.

    ``dirichlet`` marks fields that vanish on the exact boundary curve;
    ``nonlinearity`` (with ``dirichlet``) marks solutions of -lap u = f(u).
    """

    def __init__(self, mesh, values, config: JetConfig | None = None, nonlinearity=None,
                 dirichlet: bool = False):
        self.mesh = mesh
        self.values = np.asarray(values, float)
        if self.values.shape != (mesh.n_vertices,):
            raise ValueError("one value per mesh vertex expected")
        self.config = config or JetConfig()
        self.nonlinearity = nonlinearity
        self.dirichlet = bool(dirichlet) and mesh.domain is not None
        self._tree = cKDTree(mesh.vertices)
        self._vertex_jets = None
        self._fvals = None
        if nonlinearity is not None:
            self._fvals = nonlinearity.f(self.values)
        self._btree = None
        if self.dirichlet:
            dom = mesh.domain
            nb = max(int(np.ceil(2.0 * dom.perimeter / mesh.h)), 64)
            self._bt = dom.sample(nb)
            self._bpts = dom.curve.point(self._bt)
            self._btree = cKDTree(self._bpts)

    @property
    def domain(self):
        return self.mesh.domain

    @property
    def radius(self) -> float:
        c = self.config
        return max(c.multiplier * self.mesh.h, c.min_radius)

    # -- fitting ----------------------------------------------------------
    def _system(self, q, R, t_boundary):
        cfg = self.config
        B = _basis(cfg.degree)
        nbr = self._tree.query_ball_point(q, R)
        if len(nbr) < cfg.min_neighbors:
            return None, len(nbr)
        nbr = np.sort(np.asarray(nbr))
        X = self.mesh.vertices[nbr]
        xi = (X - q) / R
        d2 = (xi**2).sum(1)
        w = np.exp(-4.0 * d2)
        rows = [w[:, None] * B.values(xi)]
        rhs = [w * self.values[nbr]]
        if self._fvals is not None:
            rows.append(cfg.pde_weight * w[:, None] * B.laplacian(xi))
            rhs.append(cfg.pde_weight * w * (-R * R) * self._fvals[nbr])
        if self._btree is not None:
            bi = self._btree.query_ball_point(q, R)
            if bi:
                bi = np.sort(np.asarray(bi))
                bxi = (self._bpts[bi] - q) / R
                bw = cfg.boundary_weight * np.exp(-4.0 * (bxi**2).sum(1))
                rows.append(bw[:, None] * B.values(bxi))
                rhs.append(np.zeros(len(bi)))
        A = np.vstack(rows)
        b = np.concatenate(rhs)
        C = d = None
        if t_boundary is not None and self.dirichlet:
            C, d = self._trace_constraints(B, R, t_boundary)
        return (A, b, C, d), len(nbr)

    def _trace_constraints(self, B: _Basis, R: float, t: float):
        dom = self.domain
        _, tan, nrm, kap = dom.geometry_t(np.array([t]))
        tx, ty = tan[0]
        nx, ny = nrm[0]
        k = float(kap[0])
        ks = float(dom.kappa_s_t(np.array([t]))[0])
        D = {ab: B.deriv_row(*ab, R) for ab in _ORDER}

        def d1(v):
            return v[0] * D[(1, 0)] + v[1] * D[(0, 1)]

        def d2(v, w):
            return (v[0] * w[0] * D[(2, 0)] + (v[0] * w[1] + v[1] * w[0]) * D[(1, 1)]
                    + v[1] * w[1] * D[(0, 2)])

        def d3(v, w, z):
            out = np.zeros_like(D[(0, 0)])
            for i in range(2):
                for j in range(2):
                    for kk in range(2):
                        n = i + j + kk  # number of y-directions
                        out = out + v[i] * w[j] * z[kk] * D[(3 - n, n)]
            return out

        tv, nv = (tx, ty), (nx, ny)
        rows = [D[(0, 0)], d1(tv), d2(tv, tv) - k * d1(nv),
                d3(tv, tv, tv) - 3 * k * d2(tv, nv) - ks * d1(nv)]
        rhs = [0.0, 0.0, 0.0, 0.0]
        nl = self.nonlinearity
        if nl is not None:
            lap = D[(2, 0)] + D[(0, 2)]
            lap_t = tx * (D[(3, 0)] + D[(1, 2)]) + ty * (D[(2, 1)] + D[(0, 3)])
            lap_n = nx * (D[(3, 0)] + D[(1, 2)]) + ny * (D[(2, 1)] + D[(0, 3)])
            f0 = float(nl.f(np.array([0.0]))[0])
            fp0 = float(nl.fp(np.array([0.0]))[0])
            rows += [lap, lap_t, lap_n + fp0 * d1(nv)]
            rhs += [-f0, 0.0, 0.0]
        Cm = np.vstack(rows)
        scale = np.abs(Cm).max(1, keepdims=True)
        return Cm / scale, np.asarray(rhs) / scale[:, 0]

    def _solve(self, system):
        A, b, C, d = system
        if C is None:
            coef, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
            cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
            return coef, cond, rank == A.shape[1]
        c0 = np.linalg.lstsq(C, d, rcond=None)[0]
        N = null_space(C)
        An = A @ N
        z, _, rank, sv = np.linalg.lstsq(An, b - A @ c0, rcond=None)
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        return c0 + N @ z, cond, rank == An.shape[1]

    def fit(self, point, t_boundary: float | None = None) -> np.ndarray:
        """Jet components (JET_KEYS order) at ``point``."""
        q = np.asarray(point, float)
        cfg = self.config
        R = self.radius
        for attempt in range(2):
            system, n = self._system(q, R, t_boundary)
            if system is None:
                if attempt == 0:
                    R *= 1.5
                    continue
                raise InsufficientNeighbors(f"{n} vertices within {R:.3g} of {q.tolist()}")
            coef, cond, full = self._solve(system)
            if cond > cfg.cond_max or not full:
                if attempt == 0:
                    R *= 1.5
                    continue
                raise IllConditionedFit(f"condition {cond:.3e} at {q.tolist()}")
            break
        B = _basis(cfg.degree)
        out = np.empty(len(_ORDER))
        col = {e: k for k, e in enumerate(B.exps)}
        for m, (a, b) in enumerate(_ORDER):
            k = col.get((a, b))
            out[m] = 0.0 if k is None else coef[k] * B.fact[k] / R ** (a + b)
        return out

    def jet(self, point, t_boundary: float | None = None) -> Jet3:
        return Jet3.from_array(point, self.fit(point, t_boundary))

    def jets(self, points, t_boundary=None) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        tb = np.full(len(pts), np.nan) if t_boundary is None else np.asarray(t_boundary, float)
        out = np.empty((len(pts), len(_ORDER)))
        for i, p in enumerate(pts):
            out[i] = self.fit(p, None if np.isnan(tb[i]) else float(tb[i]))
        return out

    def vertex_jets(self) -> np.ndarray:
        """Jets at all vertices (cached); boundary vertices use trace constraints."""
        if self._vertex_jets is None:
            tb = self.mesh.boundary_t if self.dirichlet else None
            if tb is not None:
                tb = np.where(self.mesh.boundary, tb, np.nan)
            self._vertex_jets = self.jets(self.mesh.vertices, tb)
        return self._vertex_jets

    def max_gradient(self) -> float:
        J = self.vertex_jets()
        return float(np.hypot(J[:, 1], J[:, 2]).max())


def derivative_jet(field: ScalarField, point, t_boundary: float | None = None) -> Jet3:
    """Jet of ``field`` at ``point``; a boundary point may be given as a BoundaryPoint."""
    if hasattr(point, "normal") and hasattr(point, "t"):
        return field.jet(point.point, point.t)
    return field.jet(point, t_boundary)
