"""Piecewise-linear finite element matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class Operators:
    """Stiffness and mass matrices on all vertices plus the interior blocks."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    interior: np.ndarray
    K_ii: sp.csr_matrix
    M_ii: sp.csr_matrix


def _grads(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # gradients of the barycentric coordinates, one row per local vertex
    g1 = np.stack([e2[:, 1], -e2[:, 0]], 1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], 1) / det[:, None]
    g0 = -g1 - g2
    return np.stack([g0, g1, g2], 1), 0.5 * np.abs(det)


def element_stiffness(p: np.ndarray) -> np.ndarray:
    """3 x 3 stiffness matrix of one triangle with vertex coordinates p."""
    e1, e2 = p[1] - p[0], p[2] - p[0]
    det = e1[0] * e2[1] - e1[1] * e2[0]
    g1 = np.array([e2[1], -e2[0]]) / det
    g2 = np.array([-e1[1], e1[0]]) / det
    G = np.stack([-g1 - g2, g1, g2])
    return 0.5 * abs(det) * G @ G.T


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    T = mesh.triangles
    n = mesh.n_vertices
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    # exact symmetry regardless of summation order
    return ((A + A.T) * 0.5).tocsr()


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    G, area = _grads(mesh)
    local = area[:, None, None] * np.einsum("tik,tjk->tij", G, G)
    return _scatter(mesh, local)


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    _, area = _grads(mesh)
    return _scatter(mesh, area[:, None, None] * _MASS_REF[None])


def weighted_mass(mesh: Mesh, g: np.ndarray) -> sp.csr_matrix:
    """Matrix of integrals of g * phi_i * phi_j with g piecewise linear."""
    _, area = _grads(mesh)
    gv = np.asarray(g, float)[mesh.triangles]
    local = np.empty((len(area), 3, 3))
    for i in range(3):
        for j in range(3):
            if i == j:
                # int l_i^3 = A/10, int l_i^2 l_k = A/30
                local[:, i, i] = area * (gv[:, i] / 10.0 + (gv.sum(1) - gv[:, i]) / 30.0)
            else:
                k = 3 - i - j
                local[:, i, j] = area * ((gv[:, i] + gv[:, j]) / 30.0 + gv[:, k] / 60.0)
    return _scatter(mesh, local)


def assemble_operators(mesh: Mesh) -> Operators:
    K = stiffness_matrix(mesh)
    M = mass_matrix(mesh)
    idx = mesh.interior
    return Operators(K, M, idx, K[idx][:, idx].tocsr(), M[idx][:, idx].tocsr())
