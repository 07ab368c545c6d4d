"""Conforming triangulations of curved domains and a plain-text mesh format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import triangle

from .errors import InvalidParams, MeshFailure
from .geometry import DomainSpec, zero_curvature_set

MIN_ANGLE_DEG = 20.0
DIAMETER_FACTOR = 1.5


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    h: float
    boundary_t: np.ndarray | None = None
    domain: DomainSpec | None = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def min_angle(self) -> float:
        return float(np.degrees(_angles(self.vertices[self.triangles]).min()))

    def max_circumdiameter(self) -> float:
        return float(2.0 * _circumradius(self.vertices[self.triangles]).max())

    def boundary_polygon(self) -> np.ndarray:
        """Boundary vertices in counterclockwise order."""
        b = np.flatnonzero(self.boundary)
        if self.boundary_t is not None:
            return b[np.argsort(self.boundary_t[b])]
        c = self.vertices[b].mean(0)
        ang = np.arctan2(*(self.vertices[b] - c).T[::-1])
        return b[np.argsort(ang)]

    def with_domain(self, domain: DomainSpec) -> "Mesh":
        """Attach a domain, recovering boundary parameters by projection."""
        bt = np.full(self.n_vertices, np.nan)
        b = np.flatnonzero(self.boundary)
        bt[b] = domain.nearest_t(self.vertices[b])
        return Mesh(self.vertices, self.triangles, self.boundary, self.h, bt, domain)


def _angles(p: np.ndarray) -> np.ndarray:
    out = []
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosv = (a * b).sum(1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out.append(np.arccos(np.clip(cosv, -1.0, 1.0)))
    return np.stack(out, 1)


def _circumradius(p: np.ndarray) -> np.ndarray:
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return a * b * c / (4.0 * area)


def boundary_anchors(domain: DomainSpec) -> list[float]:
    """Boundary parameters that should be mesh vertices (zero-curvature sites)."""
    out = []
    for rec in zero_curvature_set(domain):
        if rec.kind == "isolated":
            out.append(rec.t0)
        else:
            s0, s1 = rec.s0, rec.s1
            if s1 < s0:
                s1 += domain.perimeter
            out.extend([rec.t0, rec.t1, float(domain.t_of_s(0.5 * (s0 + s1))) % 1.0])
    return sorted(set(round(t, 14) for t in out))


def boundary_samples(domain: DomainSpec, h: float, anchors=None) -> np.ndarray:
    """Boundary parameters with spacing at most h that include every anchor."""
    P = domain.perimeter
    if anchors is None:
        anchors = boundary_anchors(domain)
    if not anchors:
        n = max(int(np.ceil(P / h)), 8)
        return domain.sample(n)
    s_anchor = np.sort(np.asarray(domain.s_of_t(np.asarray(anchors, float))) % P)
    out = []
    for i, s0 in enumerate(s_anchor):
        s1 = s_anchor[(i + 1) % len(s_anchor)]
        if s1 <= s0:
            s1 += P
        k = max(int(np.ceil((s1 - s0) / h)), 1)
        out.append(s0 + (s1 - s0) * np.arange(k) / k)
    s = np.concatenate(out) % P
    return np.mod(domain.t_of_s(s), 1.0)


def generate_mesh(domain: DomainSpec, h: float, anchors=None, max_rounds: int = 8) -> Mesh:
    """Quality Delaunay mesh with boundary vertices on the exact curve.

    Boundary vertices are spaced by at most h along arclength and no Steiner
    points are inserted on the boundary, so every boundary vertex keeps its
    curve parameter.  Interior triangles are refined until the minimum angle
    is at least 20 degrees and every circumdiameter is at most 1.5 h.
    """
    if not (h > 0 and np.isfinite(h)):
        raise InvalidParams("mesh size must be positive")
    if h > domain.diameter / 4:
        raise InvalidParams(f"mesh size {h} too coarse for a domain of diameter {domain.diameter:.3g}")
    tb = boundary_samples(domain, h, anchors)
    B = domain.curve.point(tb)
    nb = len(B)
    seg = np.stack([np.arange(nb), (np.arange(nb) + 1) % nb], 1)
    max_area = 0.55 * h * h
    opts = f"pq{MIN_ANGLE_DEG:g}Ya{max_area:.12g}Q"
    try:
        out = triangle.triangulate({"vertices": B, "segments": seg}, opts)
    except Exception as exc:  # the C library reports failures as generic errors
        raise MeshFailure(str(exc)) from exc
    for _ in range(max_rounds):
        V, T = out["vertices"], out["triangles"]
        diam = 2.0 * _circumradius(V[T])
        bad = diam > DIAMETER_FACTOR * h
        if not bad.any():
            break
        areas = np.abs(Mesh(V, T, np.zeros(len(V), bool), h).areas())
        limit = np.where(bad, 0.5 * areas, -1.0)
        out = triangle.triangulate({"vertices": V, "triangles": T, "segments": out["segments"],
                                    "triangle_max_area": limit},
                                   f"rpq{MIN_ANGLE_DEG:g}YaQ")
    V, T = np.asarray(out["vertices"], float), np.asarray(out["triangles"], np.int64)
    if len(V) < nb or not np.allclose(V[:nb], B):
        raise MeshFailure("boundary vertices were moved by the mesher")
    boundary = np.zeros(len(V), bool)
    boundary[:nb] = True
    bt = np.full(len(V), np.nan)
    bt[:nb] = tb
    T = _orient(V, T)
    mesh = Mesh(V, T, boundary, float(h), bt, domain)
    if mesh.max_circumdiameter() > DIAMETER_FACTOR * h * (1 + 1e-9):
        raise MeshFailure("circumdiameter bound not reached")
    if mesh.min_angle() < MIN_ANGLE_DEG - 1e-6:
        raise MeshFailure(f"minimum angle {mesh.min_angle():.2f} below {MIN_ANGLE_DEG}")
    return mesh


def _orient(V, T):
    p = V[T]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    T = T.copy()
    T[neg] = T[neg][:, [0, 2, 1]]
    return T


def export_mesh(mesh: Mesh, path) -> None:
    lines = [f"vertices {mesh.n_vertices} triangles {len(mesh.triangles)}"]
    lines += [f"{x!r} {y!r} {int(b)}" for (x, y), b in zip(mesh.vertices.tolist(), mesh.boundary)]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def import_mesh(path, h: float | None = None, domain: DomainSpec | None = None) -> Mesh:
    text = Path(path).read_text().split("\n")
    head = text[0].split()
    if len(head) != 4 or head[0] != "vertices" or head[2] != "triangles":
        raise InvalidParams("bad mesh header")
    nv, nt = int(head[1]), int(head[3])
    V = np.array([[float(a) for a in ln.split()[:2]] for ln in text[1:1 + nv]])
    flag = np.array([int(ln.split()[2]) for ln in text[1:1 + nv]], bool)
    T = np.array([[int(a) for a in ln.split()] for ln in text[1 + nv:1 + nv + nt]], np.int64)
    if h is None:
        e = V[T[:, [1, 2, 0]]] - V[T]
        h = float(np.linalg.norm(e, axis=2).max())
    mesh = Mesh(V, T, flag, float(h))
    return mesh.with_domain(domain) if domain is not None else mesh
