"""Serialization of scenario results: JSON report, CSV tables and SVG plots.

Everything written here is a deterministic function of the analysis: keys
are sorted, floats are printed with 12 significant digits and nothing
time- or host-dependent is recorded.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .contour import zero_contours
from .mesh import export_mesh
from .nodal import trace_nodal_set


def clean(obj):
    """JSON-ready copy: numpy scalars to Python, floats rounded, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return None
        return float(f"{x:.12g}")
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(clean(data), sort_keys=True, indent=2) + "\n")


def _site_dict(site) -> dict:
    return {"kind": site.kind, "t0": site.t0, "t1": site.t1, "s0": site.s0, "s1": site.s1,
            "points": np.asarray(site.points).tolist()}


def build_report(an) -> dict:
    res = an.result
    deg = an.degree
    rep = {
        "version": __version__,
        "scenario": an.config.to_dict(),
        "tolerances": an.tol.to_dict(),
        "mesh": {"h": an.mesh.h, "n_vertices": an.mesh.n_vertices,
                 "n_triangles": int(len(an.mesh.triangles)), "min_angle": an.mesh.min_angle()},
        "solve": {"lambda": res.lam, "u_max": res.u_max, "residual": res.residual_norm,
                  "newton_iters": res.newton_iters, "positive": res.positive},
        "stability": None if an.stability is None else
        {"mu1": an.stability.mu1, "semistable": an.stability.semistable, "tol": an.stability.tol},
        "zero_curvature": [_site_dict(s) for s in an.sites],
        "degenerate_boundary": [
            ({"site": _site_dict(e["site"]), "error": e["error"]} if "error" in e else
             {"site": _site_dict(e["site"]), **e["report"].to_dict()})
            for e in an.site_reports],
        "loop": an.loop_info,
        "degree": None if deg is None else {**deg.to_dict(), "min_T_on_loop": deg.min_T_on_loop},
        "census": {"n_critical": an.n_critical, "n_mtheta": an.n_mtheta},
        "homotopy": None if an.homotopy is None else
        {"ok": an.homotopy.ok, "min_abs_H": an.homotopy.min_abs_H, "tau_H": an.homotopy.tau_H,
         "witness": None if an.homotopy.witness is None else
         [an.homotopy.witness[0], list(an.homotopy.witness[1])]},
        "nodal": None if an.battery is None else an.battery.to_dict(),
        "errors": an.errors,
        "verdicts": [v.to_dict() for v in an.verdicts],
    }
    return clean(rep)


# -- tables -----------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def write_field_csv(path, mesh, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u"])
        for (x, y), u in zip(mesh.vertices, values):
            w.writerow([_fmt(x), _fmt(y), _fmt(u)])


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2]


def write_branch_csv(path, branch) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "u_max", "mu1", "iters"])
        for k, lam in enumerate(branch.lam):
            mu = branch.mu1[k] if k < len(branch.mu1) else None
            w.writerow([_fmt(lam), _fmt(branch.u_max[k]), _fmt(mu), branch.iters[k]])


def write_nodal_csv(path, curves_by_theta: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "x", "y", "curve_id"])
        cid = 0
        for th in sorted(curves_by_theta):
            for c in curves_by_theta[th]:
                for x, y in c.polyline:
                    w.writerow([_fmt(th), _fmt(x), _fmt(y), cid])
                cid += 1


def write_sweep_csv(path, rows: list[dict]) -> None:
    from .scenario import CHECKS, SWEEP_COLUMNS

    cols = list(SWEEP_COLUMNS) + [c for c in CHECKS if any(c in r for r in rows)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


# -- SVG ----------------------------------------------------------------------------

_PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


class _Canvas:
    def __init__(self, points: np.ndarray, size: int = 640, pad: int = 20):
        lo, hi = points.min(0), points.max(0)
        span = float(max(hi - lo))
        self.scale = (size - 2 * pad) / span
        self.lo, self.hi, self.pad = lo, hi, pad
        self.w = int(np.ceil((hi[0] - lo[0]) * self.scale + 2 * pad))
        self.h = int(np.ceil((hi[1] - lo[1]) * self.scale + 2 * pad))
        self.items: list[str] = []

    def xy(self, p) -> tuple[float, float]:
        return (self.pad + (p[0] - self.lo[0]) * self.scale,
                self.pad + (self.hi[1] - p[1]) * self.scale)

    def polyline(self, P, stroke, width=1.0, closed=False, extra=""):
        pts = " ".join("%.2f,%.2f" % self.xy(p) for p in P)
        tag = "polygon" if closed else "polyline"
        self.items.append(f'<{tag} points="{pts}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{width}"{extra}/>')

    def dot(self, p, r, fill, stroke="#000000"):
        x, y = self.xy(p)
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{fill}" stroke="{stroke}"/>')

    def cross(self, p, r, stroke):
        x, y = self.xy(p)
        self.items.append(f'<path d="M{x - r:.2f},{y - r:.2f}L{x + r:.2f},{y + r:.2f}'
                          f'M{x - r:.2f},{y + r:.2f}L{x + r:.2f},{y - r:.2f}" stroke="{stroke}" '
                          f'stroke-width="2"/>')

    def text(self, s):
        self.items.append(f'<text x="{self.pad}" y="{self.pad - 6}" font-size="12" '
                          f'font-family="monospace">{s}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="#ffffff"/>', *self.items,
                          "</svg>"]) + "\n"


def _markers(cv: _Canvas, zeros, m_theta_points=()):
    for z in zeros:
        if z.kind == "critical_point_of_u":
            is_max = bool(np.all(np.linalg.eigvalsh(z.jet.hessian()) < 0))
            cv.dot(z.point, 5, "#000000" if is_max else "#ffffff")
        elif z.kind == "m_theta_point":
            cv.cross(z.point, 5, "#d62728")
        else:
            cv.dot(z.point, 5, "#bbbbbb", "#d62728")
    for p in m_theta_points:
        cv.cross(p, 4, "#9467bd")


def solution_svg(an, thetas=(0.0, 0.25 * np.pi, 0.5 * np.pi, 0.75 * np.pi), n_levels: int = 10,
                 nodal_curves: dict | None = None) -> str:
    """Outline, level sets of u, critical points (filled for maxima), M_theta
    markers and nodal lines for a few directions."""
    dom, mesh, u = an.domain, an.mesh, an.result.u
    poly = dom.polygon[::8]
    cv = _Canvas(poly)
    cv.polyline(poly, "#000000", 1.5, closed=True)
    umax = float(u.max())
    for k in range(1, n_levels + 1):
        c = umax * k / (n_levels + 1)
        for p in zero_contours(mesh.vertices, mesh.triangles, u - c):
            cv.polyline(p.points, "#999999", 0.7, closed=p.closed)
    for k, th in enumerate(thetas):
        curves = (nodal_curves or {}).get(float(th))
        if curves is None:
            curves = trace_nodal_set(an.result.field, float(th))
        for c in curves:
            cv.polyline(c.polyline, _PALETTE[k % len(_PALETTE)], 1.6, closed=c.closed_loop)
    mth = []
    if an.battery is not None:
        for pts in an.battery.m_theta.values():
            mth.extend(pts)
    _markers(cv, an.degree.zeros if an.degree is not None else [], mth)
    cv.text(f"{dom.family} {an.config.nonlinearity.get('kind')} lambda={an.result.lam:g}")
    return cv.render()


def nodal_svg(an, curves_by_theta: dict) -> str:
    """All sampled nodal lines over the outline, with critical points and M_theta markers."""
    dom = an.domain
    poly = dom.polygon[::8]
    cv = _Canvas(poly)
    cv.polyline(poly, "#000000", 1.5, closed=True)
    for k, th in enumerate(sorted(curves_by_theta)):
        for c in curves_by_theta[th]:
            cv.polyline(c.polyline, _PALETTE[k % len(_PALETTE)], 0.6, closed=c.closed_loop)
    mth = []
    if an.battery is not None:
        for pts in an.battery.m_theta.values():
            mth.extend(pts)
    _markers(cv, an.degree.zeros if an.degree is not None else [], mth)
    cv.text(f"nodal sets, {len(curves_by_theta)} directions")
    return cv.render()


def write_artifacts(an, report: dict, out_dir) -> dict:
    out = Path(out_dir)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    arts = {}
    write_json(out / "report.json", report)
    arts["report"] = str(out / "report.json")
    write_branch_csv(out / "branch.csv", an.branch)
    arts["branch"] = str(out / "branch.csv")
    write_field_csv(out / "field.csv", an.mesh, an.result.u)
    arts["field"] = str(out / "field.csv")
    export_mesh(an.mesh, out / "mesh.txt")
    arts["mesh"] = str(out / "mesh.txt")
    if an.battery is not None:
        curves = an.battery.curves
    else:
        curves = {float(th): trace_nodal_set(an.result.field, float(th))
                  for th in (0.0, 0.25 * np.pi, 0.5 * np.pi, 0.75 * np.pi)}
    write_nodal_csv(out / "nodal.csv", curves)
    arts["nodal"] = str(out / "nodal.csv")
    (out / "plots" / "solution.svg").write_text(solution_svg(an, nodal_curves=curves))
    arts["solution_svg"] = str(out / "plots" / "solution.svg")
    (out / "plots" / "nodal.svg").write_text(nodal_svg(an, curves))
    arts["nodal_svg"] = str(out / "plots" / "nodal.svg")
    return arts
