"""First eigenvalue of the linearized operator -lap - f'(u)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from .errors import BoundaryViolation, EigenStagnation
from .fem import assemble_operators, weighted_mass
from .jets import ScalarField


@dataclass(frozen=True, eq=False)
class StabilityReport:
    mu1: float
    eigenfunction: ScalarField
    semistable: bool
    tol: float
    iterations: int


def _linearized(result, nl):
    mesh = result.field.mesh
    ops = result.operators or assemble_operators(mesh)
    idx = ops.interior
    W = weighted_mass(mesh, nl.fp(result.u))[idx][:, idx]
    return mesh, ops, idx, (ops.K_ii - W).tocsr()


def linearized_mu1(result, nl, tol: float | None = None, max_iters: int = 500) -> StabilityReport:
    """Smallest generalized eigenvalue of A phi = mu M phi, A = K - W.

    Shift-inverted power iteration started from the solution itself, with the
    shift placed one unit below the current Rayleigh quotient.
    """
    mesh, ops, idx, A = _linearized(result, nl)
    M = ops.M_ii
    x = result.u[idx].copy()
    if not np.any(x > 0):
        x = np.ones(len(idx))
    x /= np.sqrt(x @ (M @ x))
    mu = float(x @ (A @ x))
    it = 0
    while True:
        shift = mu - 1.0
        lu = splu((A - shift * M).tocsc())
        y = lu.solve(M @ x)
        y /= np.sqrt(y @ (M @ y))
        mu_new = float(y @ (A @ y))
        it += 1
        done = abs(mu_new - mu) < 1e-10 * (1.0 + abs(mu_new))
        x, mu = y, mu_new
        if done:
            break
        if it >= max_iters:
            raise EigenStagnation(f"eigenvalue still moving after {max_iters} iterations")
    if x.sum() < 0:
        x = -x
    phi = np.zeros(mesh.n_vertices)
    phi[idx] = x
    tol_s = 1e-8 * (1.0 + abs(mu)) if tol is None else float(tol)
    fld = ScalarField(mesh, phi, result.field.config, dirichlet=True)
    return StabilityReport(mu, fld, bool(mu >= -tol_s), tol_s, it)


def quadratic_form(result, nl, phi) -> float:
    """Discrete value of the integral of |grad phi|^2 - f'(u) phi^2."""
    mesh, ops, idx, A = _linearized(result, nl)
    phi = np.asarray(phi, float)
    if phi.shape != (mesh.n_vertices,):
        raise ValueError("one value per mesh vertex expected")
    scale = max(np.abs(phi).max(), 1e-300)
    if np.abs(phi[mesh.boundary]).max(initial=0.0) > 1e-12 * scale:
        raise BoundaryViolation("test function does not vanish on the boundary")
    v = phi[idx]
    return float(v @ (A @ v))
