"""Damped Newton for -lap u = f(u) with u = 0 on the boundary, and the
natural-parameter continuation of the minimal branch."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import FoldBeforeTarget, InvalidParams, NewtonDiverged
from .fem import Operators, assemble_operators
from .jets import JetConfig, ScalarField
from .mesh import Mesh

log = logging.getLogger(__name__)

KINDS = ("constant", "gelfand", "power", "linear")


@dataclass(frozen=True)
class Nonlinearity:
    """f(u) = lam (constant), lam e^u (gelfand), lam (1+u)^p (power), lam u (linear)."""

    kind: str
    lam: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"unknown nonlinearity {self.kind!r}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise InvalidParams("lambda must be finite and non-negative")
        if self.kind == "power" and not np.isfinite(self.p):
            raise InvalidParams("power exponent must be finite")

    def with_lam(self, lam: float) -> "Nonlinearity":
        return Nonlinearity(self.kind, float(lam), self.p)

    def f(self, u):
        u = np.asarray(u, float)
        if self.kind == "constant":
            return np.full_like(u, self.lam)
        if self.kind == "gelfand":
            return self.lam * np.exp(u)
        if self.kind == "power":
            return self.lam * np.maximum(1.0 + u, 0.0) ** self.p
        return self.lam * u

    def fp(self, u):
        u = np.asarray(u, float)
        if self.kind == "constant":
            return np.zeros_like(u)
        if self.kind == "gelfand":
            return self.lam * np.exp(u)
        if self.kind == "power":
            return self.lam * self.p * np.maximum(1.0 + u, 0.0) ** (self.p - 1)
        return np.full_like(u, self.lam)

    def fpp(self, u):
        u = np.asarray(u, float)
        if self.kind == "gelfand":
            return self.lam * np.exp(u)
        if self.kind == "power":
            return self.lam * self.p * (self.p - 1) * np.maximum(1.0 + u, 0.0) ** (self.p - 2)
        return np.zeros_like(u)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "lambda": self.lam}
        if self.kind == "power":
            d["p"] = self.p
        return d


@dataclass(eq=False)
class SolveResult:
    field: ScalarField
    residual_norm: float
    newton_iters: int
    positive: bool
    lam: float
    residual_history: list[float] = field(default_factory=list)
    operators: Operators | None = field(default=None, repr=False)

    @property
    def u(self) -> np.ndarray:
        return self.field.values

    @property
    def u_max(self) -> float:
        return float(self.field.values.max())


def _residual(ops: Operators, nl: Nonlinearity, ui: np.ndarray, lumped: np.ndarray):
    F = ops.K_ii @ ui - ops.M_ii @ nl.f(ui)
    return F, float(np.abs(F / lumped).max()) if len(F) else 0.0


def solve_semilinear(mesh: Mesh, nl: Nonlinearity, init=None, tol: float = 1e-10,
                     max_iters: int = 50, ops: Operators | None = None,
                     jet_config: JetConfig | None = None) -> SolveResult:
    """Damped Newton on the interior unknowns.

    The residual K u - M f(u) is measured in the max norm after division by
    the lumped mass, so it approximates the pointwise residual of the PDE.
    """
    if not (tol > 0):
        raise InvalidParams("tolerance must be positive")
    ops = ops or assemble_operators(mesh)
    idx = ops.interior
    lumped = np.asarray(ops.M_ii.sum(axis=1)).ravel()
    if init is None:
        ui = np.zeros(len(idx))
    else:
        init = np.asarray(init, float)
        ui = init[idx].copy() if init.shape == (mesh.n_vertices,) else init.copy()
    F, r = _residual(ops, nl, ui, lumped)
    hist = [r]
    it = 0
    while r > tol:
        if it >= max_iters:
            raise NewtonDiverged(f"no convergence after {max_iters} iterations", r, it)
        J = (ops.K_ii - ops.M_ii @ sp.diags(nl.fp(ui))).tocsc()
        try:
            du = splu(J).solve(-F)
        except RuntimeError as exc:
            raise NewtonDiverged(f"singular Jacobian: {exc}", r, it) from exc
        alpha = 1.0
        while True:
            cand = ui + alpha * du
            Fc, rc = _residual(ops, nl, cand, lumped)
            if np.isfinite(rc) and rc < r:
                break
            alpha *= 0.5
            if alpha < 1e-4:
                raise NewtonDiverged("line search hit the damping floor", r, it + 1)
        ui, F, r = cand, Fc, rc
        hist.append(r)
        it += 1
    u = np.zeros(mesh.n_vertices)
    u[idx] = ui
    positive = bool(len(ui) and ui.min() > -1e-12 and ui.max() > 0)
    fld = ScalarField(mesh, u, jet_config, nonlinearity=nl, dirichlet=True)
    return SolveResult(fld, r, it, positive, nl.lam, hist, ops)


@dataclass(eq=False)
class Branch:
    lam: list[float] = field(default_factory=list)
    u_max: list[float] = field(default_factory=list)
    iters: list[int] = field(default_factory=list)
    mu1: list[float] = field(default_factory=list)
    results: list[SolveResult] = field(default_factory=list, repr=False)


def continuation_minimal_branch(mesh: Mesh, family: Nonlinearity, lam_target: float,
                                step0: float = 0.1, tol: float = 1e-10, max_iters: int = 30,
                                with_mu1: bool = False, keep_results: bool = False,
                                jet_config: JetConfig | None = None):
    """Follow the minimal branch from u = 0 at lambda = 0 up to ``lam_target``.

    Steps are halved after a Newton failure.  When the step falls below
    1e-4 * lam_target the last bracket is reported as a fold.
    Returns ``(final SolveResult, Branch)``.
    """
    if lam_target <= 0 or step0 <= 0:
        raise InvalidParams("target and step must be positive")
    from .stability import linearized_mu1

    ops = assemble_operators(mesh)
    branch = Branch()
    lam = 0.0
    u = np.zeros(mesh.n_vertices)
    step = min(step0, lam_target)
    last = None
    while lam < lam_target:
        nxt = min(lam + step, lam_target)
        try:
            res = solve_semilinear(mesh, family.with_lam(nxt), init=u, tol=tol,
                                   max_iters=max_iters, ops=ops, jet_config=jet_config)
            if last is not None and res.u_max < last.u_max:
                raise NewtonDiverged("jumped off the minimal branch", res.residual_norm)
        except NewtonDiverged:
            step *= 0.5
            if step < 1e-4 * lam_target:
                bracket = (lam, lam + 2 * step)
                lam_star = 0.5 * (bracket[0] + bracket[1])
                raise FoldBeforeTarget(f"fold near lambda = {lam_star:.6g}", lam_star, bracket, branch)
            continue
        lam = nxt
        u = res.u
        last = res
        branch.lam.append(lam)
        branch.u_max.append(res.u_max)
        branch.iters.append(res.newton_iters)
        if with_mu1:
            branch.mu1.append(linearized_mu1(res, family.with_lam(lam)).mu1)
        if keep_results:
            branch.results.append(res)
        log.debug("lambda %.6g  u_max %.6g  iters %d", lam, res.u_max, res.newton_iters)
    return last, branch
