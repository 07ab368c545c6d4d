"""End-to-end scenario runs: solve, certify stability, compute the degree of
T, run the nodal battery and turn everything into verdicts."""

from __future__ import annotations

import copy
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .degree import DegreeReport, degree_report, homotopy_admissible, t_field
from .errors import (BallsOverlap, BallSwallowsBoundary, CritlabError, InvalidParams,
                     ZeroOnLoop)
from .fem import assemble_operators
from .geometry import (FAMILIES, DomainSpec, boundary_loop, make_domain, omega_epsilon,
                       zero_curvature_set)
from .jets import ScalarField
from .mesh import Mesh, generate_mesh
from .nodal import DegenerateBoundaryReport, degenerate_boundary_analysis, nodal_battery
from .solver import KINDS, Branch, Nonlinearity, SolveResult, continuation_minimal_branch, solve_semilinear
from .stability import StabilityReport, linearized_mu1

log = logging.getLogger(__name__)

CHECKS = ("semistable", "hypothesis_check", "degree_one", "unique_critical", "m_theta_empty",
          "nodal_structure", "degenerate_boundary", "homotopy_admissible",
          "poincare_hopf_consistent")
NONCONVEX_CHECKS = ("semistable", "poincare_hopf_consistent")
OUTPUT_ROOT_ENV = "CRITLAB_OUTPUT_ROOT"


@dataclass
class ScenarioConfig:
    domain: dict
    nonlinearity: dict
    mesh_h: float = 0.05
    theta_samples: int = 64
    epsilon: float | str = "auto"
    checks: list[str] | None = None
    output_dir: str | None = None
    name: str = "scenario"

    def __post_init__(self):
        fam = self.domain.get("family")
        if fam not in FAMILIES:
            raise InvalidParams(f"unknown domain family {fam!r}")
        if self.nonlinearity.get("kind") not in KINDS:
            raise InvalidParams(f"unknown nonlinearity {self.nonlinearity.get('kind')!r}")
        if not (float(self.mesh_h) > 0):
            raise InvalidParams("mesh_h must be positive")
        if int(self.theta_samples) < 1:
            raise InvalidParams("theta_samples must be at least 1")
        if self.epsilon != "auto" and not (float(self.epsilon) > 0):
            raise InvalidParams("epsilon must be 'auto' or positive")
        if self.checks is not None:
            bad = [c for c in self.checks if c not in CHECKS]
            if bad:
                raise InvalidParams(f"unknown checks {bad}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        dom = dict(d.pop("domain"))
        dom.setdefault("params", {})
        known = {k: d[k] for k in ("mesh_h", "theta_samples", "epsilon", "checks", "output_dir", "name")
                 if k in d}
        return cls(dom, dict(d.pop("nonlinearity")), **known)

    def to_dict(self) -> dict:
        return {"domain": copy.deepcopy(self.domain), "nonlinearity": dict(self.nonlinearity),
                "mesh_h": float(self.mesh_h), "theta_samples": int(self.theta_samples),
                "epsilon": self.epsilon, "checks": None if self.checks is None else list(self.checks),
                "name": self.name}

    def nonlinearity_obj(self) -> Nonlinearity:
        nl = self.nonlinearity
        return Nonlinearity(nl["kind"], float(nl.get("lambda", nl.get("lam", 1.0))), float(nl.get("p", 2.0)))

    def domain_obj(self) -> DomainSpec:
        return make_domain(self.domain["family"], self.domain.get("params", {}))

    def with_value(self, path: str, value) -> "ScenarioConfig":
        """Copy with a dotted parameter replaced, e.g. 'domain.params.w'."""
        d = self.to_dict()
        d["output_dir"] = self.output_dir
        keys = path.split(".")
        cur = d
        for k in keys[:-1]:
            if k not in cur or not isinstance(cur[k], dict):
                raise InvalidParams(f"parameter {path!r} does not resolve in the template")
            cur = cur[k]
        if keys[-1] not in cur and keys[0] != "domain":
            raise InvalidParams(f"parameter {path!r} does not resolve in the template")
        cur[keys[-1]] = value
        return ScenarioConfig.from_dict(d)


def load_config(path) -> ScenarioConfig:
    """Read a scenario from a JSON or TOML file."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text.decode())
    else:
        data = json.loads(text)
    cfg = ScenarioConfig.from_dict(data)
    # relative spline CSV paths are relative to the config file
    params = cfg.domain.get("params", {})
    if "csv" in params and not Path(params["csv"]).is_absolute():
        params["csv"] = str((path.parent / params["csv"]).resolve())
    return cfg


def output_dir_for(config: ScenarioConfig, override=None) -> Path:
    if override is not None:
        return Path(override)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        return Path(root) / config.name
    if config.output_dir:
        return Path(config.output_dir)
    return Path("critlab_out") / config.name


# -- verdicts -------------------------------------------------------------------

@dataclass
class Verdict:
    name: str
    status: str  # pass | fail | inconclusive
    evidence: dict = field(default_factory=dict)
    asserted: bool = True

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "asserted": self.asserted,
                "evidence": self.evidence}


def exit_code(verdicts: list[Verdict]) -> int:
    """0 when all asserted verdicts pass, 1 on any failure, else 2."""
    st = [v.status for v in verdicts if v.asserted]
    if "fail" in st:
        return 1
    if "inconclusive" in st:
        return 2
    return 0


@dataclass(eq=False)
class Tolerances:
    tau_grad: float
    tau_T: float
    tau_H: float
    tau_hess: float
    tau_kappa: float
    tau_mu: float
    tau_det_rel: float = 1e-8
    tau_nodal: float = 1e-12

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def tolerances(field: ScalarField, domain: DomainSpec, stab: StabilityReport | None) -> Tolerances:
    h = field.mesh.h
    J = field.vertex_jets()
    gmax = float(np.hypot(J[:, 1], J[:, 2]).max())
    Tmax = float(np.linalg.norm(t_field(J), axis=1).max())
    Hmax = float(np.sqrt(J[:, 3] ** 2 + 2 * J[:, 4] ** 2 + J[:, 5] ** 2).max())
    kap = np.abs(domain.geometry_t(domain.sample(4096))[3]).max()
    return Tolerances(10 * h * h * gmax, 10 * h * h * Tmax, 1e-3 * max(Tmax, domain.diameter),
                      10 * h * h * Hmax, 1e-6 * float(kap),
                      stab.tol if stab is not None else 0.0)


# -- pipeline -------------------------------------------------------------------

@dataclass(eq=False)
class Analysis:
    """Everything computed for one scenario (kept in memory for tests and plots)."""

    config: ScenarioConfig
    domain: DomainSpec
    mesh: Mesh
    result: SolveResult
    branch: Branch
    stability: StabilityReport | None
    tol: Tolerances
    sites: list
    site_reports: list
    loop_info: dict
    degree: DegreeReport | None
    homotopy: object
    battery: object
    verdicts: list[Verdict]
    errors: dict

    @property
    def n_critical(self) -> int:
        if self.degree is None:
            return 0
        return sum(1 for z in self.degree.zeros if z.kind == "critical_point_of_u")

    @property
    def n_mtheta(self) -> int:
        if self.degree is None:
            return 0
        return sum(1 for z in self.degree.zeros if z.kind == "m_theta_point")


def solve_scenario(config: ScenarioConfig, domain: DomainSpec | None = None,
                   mesh: Mesh | None = None) -> tuple[DomainSpec, Mesh, SolveResult, Branch]:
    domain = domain or config.domain_obj()
    mesh = mesh or generate_mesh(domain, float(config.mesh_h))
    nl = config.nonlinearity_obj()
    if nl.kind in ("gelfand", "power") and nl.lam > 0:
        res, branch = continuation_minimal_branch(mesh, nl, nl.lam, step0=min(0.1, nl.lam),
                                                  with_mu1=True)
    else:
        res = solve_semilinear(mesh, nl)
        branch = Branch([nl.lam], [res.u_max], [res.newton_iters], [])
    return domain, mesh, res, branch


def result_from_values(mesh: Mesh, nl: Nonlinearity, u: np.ndarray) -> SolveResult:
    """Wrap saved vertex values as a solve result (residual recomputed)."""
    ops = assemble_operators(mesh)
    idx = ops.interior
    lumped = np.asarray(ops.M_ii.sum(axis=1)).ravel()
    F = ops.K_ii @ u[idx] - ops.M_ii @ nl.f(u[idx])
    r = float(np.abs(F / lumped).max()) if len(F) else 0.0
    fld = ScalarField(mesh, u, None, nonlinearity=nl, dirichlet=True)
    positive = bool(len(idx) and u[idx].min() > -1e-12 and u[idx].max() > 0)
    return SolveResult(fld, r, 0, positive, nl.lam, [r], ops)


def _segment_mid_t(domain: DomainSpec, site) -> float:
    length = (site.s1 - site.s0) % domain.perimeter
    return float(domain.t_of_s(np.array([(site.s0 + 0.5 * length) % domain.perimeter]))[0])


def _select_loop(config, domain, fld, centers, tol, h):
    """Omega_eps loop around the degenerate sites ``centers`` (boundary parameters)."""
    if not centers:
        return boundary_loop(domain), {"kind": "boundary", "epsilon": None, "centers": [], "tries": []}
    if config.epsilon != "auto":
        cands = [float(config.epsilon)]
    else:
        cands = [5 * h * 1.5**k for k in range(6)] + [5 * h / 1.5**k for k in (1, 2, 3)]
    tries = []
    for eps in cands:
        try:
            loop = omega_epsilon(domain, centers, eps)
        except (BallsOverlap, BallSwallowsBoundary) as exc:
            tries.append({"epsilon": eps, "reason": type(exc).__name__})
            continue
        u = np.linspace(0, 1, 2048, endpoint=False)
        pts, tb = loop.evaluate(u)
        arc = np.isnan(tb)
        J = fld.jets(pts[arc])
        gmin = float(np.hypot(J[:, 1], J[:, 2]).min()) if len(J) else np.inf
        Tmin = float(np.linalg.norm(t_field(J), axis=1).min()) if len(J) else np.inf
        if gmin <= tol.tau_grad or Tmin <= tol.tau_T:
            tries.append({"epsilon": eps, "reason": "small gradient or T on the ring",
                          "min_grad": gmin, "min_T": Tmin})
            continue
        tries.append({"epsilon": eps, "reason": "accepted", "min_grad": gmin, "min_T": Tmin})
        return loop, {"kind": "omega_epsilon", "epsilon": eps,
                      "centers": [float(t) for t in loop.centers], "tries": tries}
    raise CritlabError(f"no admissible epsilon among {len(cands)} candidates")


def _star_margin(loop, p) -> float:
    P = loop.polyline(2048)
    Q = P - p
    E = np.roll(P, -1, axis=0) - P
    return float((Q[:, 0] * E[:, 1] - Q[:, 1] * E[:, 0]).min() / np.linalg.norm(E, axis=1).max())


def analyze(config: ScenarioConfig, domain: DomainSpec, mesh: Mesh, result: SolveResult,
            branch: Branch) -> Analysis:
    """Run stability, degree, nodal and boundary analyses and form the verdicts."""
    h = mesh.h
    nl = config.nonlinearity_obj()
    fld = result.field
    errors: dict = {}
    convex = bool(domain.convex)
    requested = list(config.checks) if config.checks is not None else \
        list(CHECKS if convex else NONCONVEX_CHECKS)

    stab = None
    try:
        stab = linearized_mu1(result, nl)
    except CritlabError as exc:
        errors["stability"] = f"{type(exc).__name__}: {exc}"
    if branch.mu1 == [] and stab is not None:
        branch.mu1 = [stab.mu1] * len(branch.lam)
    tol = tolerances(fld, domain, stab)

    # zero-curvature sites, their jet reports and the excision set
    sites = zero_curvature_set(domain)
    reports: list = []
    centers: list[float] = []
    for site in sites:
        try:
            rep = degenerate_boundary_analysis(fld, domain, site, tol.tau_grad)
        except CritlabError as exc:
            reports.append({"site": site, "error": f"{type(exc).__name__}: {exc}"})
            errors.setdefault("degenerate_boundary", []).append(str(exc))
            if site.kind == "segment":
                centers.append(_segment_mid_t(domain, site))
            continue
        reports.append({"site": site, "report": rep})
        if convex and rep.case == "case2_uxy_zero":
            centers.append(site.t0)
        elif convex and rep.case == "segment":
            centers.append(rep.t)

    loop = None
    loop_info: dict = {"kind": None}
    try:
        loop, loop_info = _select_loop(config, domain, fld, centers, tol, h)
    except CritlabError as exc:
        errors["loop"] = f"{type(exc).__name__}: {exc}"

    deg = None
    hom = None
    p = domain.centroid
    if loop is not None:
        try:
            deg = degree_report(fld, loop, tau_T=tol.tau_T, tau_grad=tol.tau_grad)
        except ZeroOnLoop as exc:
            errors["degree"] = f"ZeroOnLoop: {exc}"
        except CritlabError as exc:
            errors["degree"] = f"{type(exc).__name__}: {exc}"
        if deg is not None and deg.samples is not None:
            hom = homotopy_admissible(deg.samples, p, tol.tau_H)
        if convex:
            loop_info["star_margin"] = _star_margin(loop, p)

    battery = None
    if convex and any(c in requested for c in ("m_theta_empty", "nodal_structure")):
        thetas = np.pi * np.arange(int(config.theta_samples)) / int(config.theta_samples)
        battery = nodal_battery(fld, thetas, tol.tau_grad)

    an = Analysis(config, domain, mesh, result, branch, stab, tol, sites, reports, loop_info,
                  deg, hom, battery, [], errors)
    verdicts = _verdicts(an, nl, requested)
    an.verdicts = verdicts
    return an


def _verdicts(an: Analysis, nl: Nonlinearity, requested: list[str]) -> list[Verdict]:
    tol = an.tol
    out: dict[str, Verdict] = {}

    # (a) semi-stability
    if an.stability is None:
        out["semistable"] = Verdict("semistable", "inconclusive", {"error": an.errors.get("stability")})
    else:
        mu = an.stability.mu1
        st = "pass" if mu > tol.tau_mu else ("fail" if mu < -tol.tau_mu else "inconclusive")
        out["semistable"] = Verdict("semistable", st, {"mu1": mu, "tol": tol.tau_mu})

    # (b) hypotheses of the uniqueness theorems
    kap = an.domain.geometry_t(an.domain.sample(4096))[3]
    f0 = float(nl.f(np.array([0.0]))[0])
    ev = {"min_kappa": float(kap.min()), "tol_kappa": tol.tau_kappa, "f0": f0,
          "positive": bool(an.result.positive), "min_u_interior": float(an.result.u[an.mesh.interior].min())}
    ok = kap.min() >= -tol.tau_kappa and f0 >= 0 and an.result.positive
    out["hypothesis_check"] = Verdict("hypothesis_check", "pass" if ok else "fail", ev)

    deg = an.degree
    deg_ev = {"error": an.errors.get("degree") or an.errors.get("loop")}
    if deg is not None:
        deg_ev = {"winding": deg.winding, "index_sum": deg.index_sum,
                  "min_T_on_loop": deg.min_T_on_loop, "tau_T": tol.tau_T,
                  "n_critical": an.n_critical, "n_mtheta": an.n_mtheta,
                  "indices": [int(z.index) for z in deg.zeros],
                  "n_unresolved": sum(1 for z in deg.zeros if z.kind == "unresolved" or z.index == 0)}

    # (c) degree one
    if deg is None:
        out["degree_one"] = Verdict("degree_one", "inconclusive", dict(deg_ev))
    else:
        out["degree_one"] = Verdict("degree_one", "pass" if deg.winding == 1 else "fail", dict(deg_ev))

    # (d) unique nondegenerate critical point, a maximum
    if deg is None:
        out["unique_critical"] = Verdict("unique_critical", "inconclusive", dict(deg_ev))
    else:
        crit = [z for z in deg.zeros if z.kind == "critical_point_of_u"]
        ev = dict(deg_ev)
        ev["tau_hess"] = tol.tau_hess
        if len(crit) == 1:
            eig = np.linalg.eigvalsh(crit[0].jet.hessian())
            ev.update({"hessian_eigenvalues": [float(v) for v in eig],
                       "x0": [float(v) for v in crit[0].point],
                       "eig_margin": float(-eig.max() / tol.tau_hess) if tol.tau_hess > 0 else None})
        if ev["n_unresolved"]:
            st = "inconclusive"
        elif len(crit) != 1 or crit[0].index != 1:
            st = "fail"
        else:
            top = float(eig.max())
            st = "pass" if top < -tol.tau_hess else ("fail" if top > tol.tau_hess else "inconclusive")
        out["unique_critical"] = Verdict("unique_critical", st, ev)

    # (e), (f) nodal battery
    b = an.battery
    if b is None:
        out["m_theta_empty"] = Verdict("m_theta_empty", "inconclusive", {"reason": "battery not run"})
        out["nodal_structure"] = Verdict("nodal_structure", "inconclusive", {"reason": "battery not run"})
    else:
        out["m_theta_empty"] = Verdict("m_theta_empty", "pass" if b.n_m_theta == 0 else "fail",
                                       {"n_theta": int(len(b.thetas)), "n_m_theta": b.n_m_theta})
        out["nodal_structure"] = Verdict("nodal_structure", "pass" if b.ok else "fail",
                                         {"n_theta": int(len(b.thetas)), "n_failures": len(b.failures),
                                          "failures": b.failures[:10]})

    # (g) signs at degenerate boundary points
    items = []
    st = "pass"
    for entry in an.site_reports:
        site = entry["site"]
        if "error" in entry:
            items.append({"kind": site.kind, "error": entry["error"]})
            st = "inconclusive" if st == "pass" else st
            continue
        rep: DegenerateBoundaryReport = entry["report"]
        if rep.case == "case1_uxy_nonzero":
            items.append({"kind": site.kind, "case": rep.case, "u_xy": rep.u_xy})
            continue
        if rep.case == "case2_uxy_zero":
            good = rep.signs_ok
        else:
            c = rep.checks
            good = bool(c["uxy_sign_change"] and c["uxxy_positive"] and c["hopf"])
        items.append({"kind": site.kind, "case": rep.case, "u_xxy": rep.u_xxy, "kappa_y": rep.kappa_y,
                      "ok": bool(good)})
        if not good:
            st = "fail"
    out["degenerate_boundary"] = Verdict("degenerate_boundary", st,
                                         {"n_sites": len(an.site_reports), "sites": items,
                                          "margin": 10 * tol.tau_grad})

    # (h) homotopy certificate
    if an.homotopy is None:
        out["homotopy_admissible"] = Verdict("homotopy_admissible", "inconclusive", dict(deg_ev))
    else:
        hc = an.homotopy
        out["homotopy_admissible"] = Verdict(
            "homotopy_admissible", "pass" if hc.ok else "fail",
            {"min_abs_H": hc.min_abs_H, "tau_H": hc.tau_H,
             "witness": None if hc.witness is None else [hc.witness[0], list(hc.witness[1])],
             "p": [float(v) for v in an.domain.centroid]})

    # (i) degree bookkeeping
    if deg is None:
        out["poincare_hopf_consistent"] = Verdict("poincare_hopf_consistent", "inconclusive", dict(deg_ev))
    else:
        st = "pass" if deg.consistent else ("inconclusive" if deg_ev["n_unresolved"] else "fail")
        out["poincare_hopf_consistent"] = Verdict("poincare_hopf_consistent", st, dict(deg_ev))

    verdicts = [out[c] for c in CHECKS if c in requested]
    if "unique_critical" not in requested and deg is not None:
        # census only: reported, never asserted
        v = out["unique_critical"]
        verdicts.append(Verdict(v.name, v.status, v.evidence, asserted=False))
    return verdicts


# -- orchestration --------------------------------------------------------------

@dataclass(eq=False)
class ScenarioResult:
    verdicts: list[Verdict]
    artifacts: dict
    report: dict
    analysis: Analysis | None = field(default=None, repr=False)

    @property
    def exit_code(self) -> int:
        return exit_code(self.verdicts)


def run_scenario(config: ScenarioConfig, write: bool = True, out_dir=None) -> ScenarioResult:
    from .report import build_report, write_artifacts

    try:
        domain, mesh, res, branch = solve_scenario(config)
    except CritlabError as exc:
        v = [Verdict(c, "inconclusive", {"error": f"{type(exc).__name__}: {exc}"})
             for c in (config.checks or CHECKS)]
        report = {"version": __version__, "scenario": config.to_dict(),
                  "error": f"{type(exc).__name__}: {exc}", "verdicts": [x.to_dict() for x in v]}
        arts = {}
        if write:
            from .report import write_json
            d = output_dir_for(config, out_dir)
            d.mkdir(parents=True, exist_ok=True)
            write_json(d / "report.json", report)
            arts["report"] = str(d / "report.json")
        return ScenarioResult(v, arts, report)
    an = analyze(config, domain, mesh, res, branch)
    report = build_report(an)
    arts = write_artifacts(an, report, output_dir_for(config, out_dir)) if write else {}
    return ScenarioResult(an.verdicts, arts, report, an)


SWEEP_COLUMNS = ("value", "mu1", "n_critical", "n_mtheta", "winding", "exit_code", "error")


def sweep(template: ScenarioConfig, parameter: str, values: list, write: bool = True,
          out_dir=None) -> list[dict]:
    """One scenario per value; returns summary rows in input order."""
    rows = []
    root = output_dir_for(template, out_dir)
    for k, val in enumerate(values):
        row = {"value": val}
        try:
            cfg = template.with_value(parameter, val)
            cfg.name = f"{template.name}_{k:03d}"
            sub = root / cfg.name
            r = run_scenario(cfg, write=write, out_dir=sub)
            an = r.analysis
            row.update({"mu1": (an.stability.mu1 if an and an.stability else None),
                        "n_critical": an.n_critical if an else None,
                        "n_mtheta": an.n_mtheta if an else None,
                        "winding": an.degree.winding if an and an.degree else None,
                        "exit_code": r.exit_code, "error": r.report.get("error")})
            for v in r.verdicts:
                row[v.name] = v.status
        except Exception as exc:  # a failed run is recorded and the sweep goes on
            log.warning("sweep value %r failed: %s", val, exc)
            row.update({"error": f"{type(exc).__name__}: {exc}", "exit_code": 2})
        rows.append(row)
    if write:
        from .report import write_sweep_csv
        root.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(root / "sweep.csv", rows)
    return rows
