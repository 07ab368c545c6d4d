"""Zero contours of piecewise-linear fields on triangle meshes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass(eq=False)
class ContourPath:
    """An ordered chain of contour nodes.

    ``ends`` holds the node degree at both ends (1 = free end, > 2 = junction)
    and is empty for closed chains.
    """

    points: np.ndarray
    closed: bool
    ends: tuple[int, ...]
    component: int


def _signs(values: np.ndarray, snap: float) -> np.ndarray:
    s = np.sign(values).astype(int)
    s[np.abs(values) <= snap] = 0
    return s


def contour_segments(vertices: np.ndarray, triangles: np.ndarray, values: np.ndarray,
                     snap: float = 0.0, skip_edges: set | None = None):
    """Segments of the zero set of the P1 interpolant.

    Vertices with |value| <= snap count as exact zeros.  Nodes are keyed by
    ("v", i) for zero vertices and ("e", i, j) for sign-changing edges, so
    neighbouring triangles share them.  Segments lying on a mesh edge are
    emitted once; those on edges listed in ``skip_edges`` are dropped.
    """
    values = np.asarray(values, float)
    s = _signs(values, snap)
    st = s[triangles]
    # a triangle can carry a segment only if it has a zero or a sign change
    cand = np.flatnonzero((st.min(1) <= 0) & (st.max(1) >= 0) & ~np.all(st == 0, axis=1))
    points: dict = {}
    segs: set = set()
    for t in cand:
        tri = triangles[t]
        nodes = []
        for a, b in _EDGES:
            i, j = int(tri[a]), int(tri[b])
            if s[i] == 0:
                nodes.append(("v", i))
            elif s[i] * s[j] < 0:
                key = ("e", min(i, j), max(i, j))
                if key not in points:
                    w = values[i] / (values[i] - values[j])
                    points[key] = (1.0 - w) * vertices[i] + w * vertices[j]
                nodes.append(key)
        if len(nodes) != 2:
            continue
        for key in nodes:
            if key[0] == "v" and key not in points:
                points[key] = vertices[key[1]].copy()
        k1, k2 = sorted(nodes)
        if k1[0] == "v" and k2[0] == "v" and skip_edges is not None:
            if (min(k1[1], k2[1]), max(k1[1], k2[1])) in skip_edges:
                continue
        segs.add((k1, k2))
    return points, sorted(segs)


def chain_segments(points: dict, segs: list) -> list[ContourPath]:
    """Chain segments into maximal paths, breaking at junction nodes."""
    adj: dict = {}
    for k, (a, b) in enumerate(segs):
        adj.setdefault(a, []).append(k)
        adj.setdefault(b, []).append(k)
    # connected components for bookkeeping
    comp: dict = {}
    cid = 0
    for start in sorted(adj):
        if start in comp:
            continue
        stack = [start]
        comp[start] = cid
        while stack:
            n = stack.pop()
            for k in adj[n]:
                for m in segs[k]:
                    if m not in comp:
                        comp[m] = cid
                        stack.append(m)
        cid += 1
    used = np.zeros(len(segs), bool)
    paths: list[ContourPath] = []

    def walk(node, k):
        chain = [node]
        while True:
            used[k] = True
            a, b = segs[k]
            node = b if a == node else a
            chain.append(node)
            if len(adj[node]) != 2:
                return chain
            nxt = [j for j in adj[node] if not used[j]]
            if not nxt:
                return chain
            k = nxt[0]

    # open chains start at free ends or junctions
    for node in sorted(adj):
        if len(adj[node]) == 2:
            continue
        for k in adj[node]:
            if not used[k]:
                chain = walk(node, k)
                pts = np.array([points[c] for c in chain])
                paths.append(ContourPath(pts, False, (len(adj[chain[0]]), len(adj[chain[-1]])),
                                         comp[node]))
    # what is left are closed loops through degree-two nodes
    for k in range(len(segs)):
        if used[k]:
            continue
        node = segs[k][0]
        chain = walk(node, k)
        pts = np.array([points[c] for c in chain[:-1]])
        paths.append(ContourPath(pts, True, (), comp[node]))
    return paths


def zero_contours(vertices, triangles, values, snap: float = 0.0,
                  skip_edges: set | None = None) -> list[ContourPath]:
    points, segs = contour_segments(vertices, triangles, values, snap, skip_edges)
    return chain_segments(points, segs)


def boundary_edges(triangles: np.ndarray) -> set:
    """Edges used by exactly one triangle, as sorted vertex pairs."""
    e = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    uniq, cnt = np.unique(e, axis=0, return_counts=True)
    return {(int(a), int(b)) for a, b in uniq[cnt == 1]}
