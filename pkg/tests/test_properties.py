from __future__ import annotations

from functools import lru_cache

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import convolve2d

from critlab.degree import homotopy_admissible, sample_loop, t_field, winding_number
from critlab.geometry import make_domain
from critlab.jets import ScalarField, polynomial_jet, rotate_jet
from critlab.mesh import generate_mesh

coef = st.floats(-1.0, 1.0, allow_nan=False)
angle = st.floats(0.0, 2 * np.pi, allow_nan=False)
point = st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))


def poly_coeffs(deg):
    keys = [(i, j) for i in range(deg + 1) for j in range(deg + 1 - i)]
    return st.lists(coef, min_size=len(keys), max_size=len(keys)).map(lambda cs: dict(zip(keys, cs)))


@lru_cache(maxsize=None)
def _mesh(family):
    return generate_mesh(make_domain(family, {}), 0.05)


def _compose_linear(co: dict, A: np.ndarray) -> dict:
    """Coefficients of v(xi) = u(A xi) by direct expansion."""
    deg = max(i + j for i, j in co)
    lx = np.zeros((2, 2))
    lx[1, 0], lx[0, 1] = A[0, 0], A[0, 1]
    ly = np.zeros((2, 2))
    ly[1, 0], ly[0, 1] = A[1, 0], A[1, 1]
    out = np.zeros((deg + 1, deg + 1))
    for (i, j), c in co.items():
        term = np.ones((1, 1))
        for _ in range(i):
            term = convolve2d(term, lx)
        for _ in range(j):
            term = convolve2d(term, ly)
        out[:term.shape[0], :term.shape[1]] += c * term
    return {(i, j): out[i, j] for i in range(deg + 1) for j in range(deg + 1) if out[i, j] != 0}


@settings(max_examples=60, deadline=None)
@given(poly_coeffs(4), angle, point)
def test_t_rotation_equivariant(co, phi, q):
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    q = np.asarray(q)
    v = _compose_linear(co, R.T)  # v = u o R^-1
    lhs = t_field(polynomial_jet(v, R @ q))
    rhs = R @ t_field(polynomial_jet(co, q))
    assert np.abs(lhs - rhs).max() <= 1e-9
    # the jet transformation agrees with the expanded polynomial
    r = rotate_jet(polynomial_jet(co, q), -phi)
    assert np.allclose(r.array, polynomial_jet(v, R @ q).array, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(poly_coeffs(4), point, st.sampled_from(["disk", "ellipse"]))
def test_jets_reproduce_quartics(co, q, family):
    mesh = _mesh(family)
    x, y = mesh.vertices.T
    field = ScalarField(mesh, sum(c * x**i * y**j for (i, j), c in co.items()))
    exact = polynomial_jet(co, q).array
    got = field.jet(q).array
    assert np.abs(got - exact).max() <= 1e-9 * max(np.abs(exact).max(), 1.0)


def _roots_field(roots):
    def sampler(u):
        t = 2 * np.pi * np.asarray(u)
        z = np.exp(1j * t)
        w = np.prod([z - a for a in roots], axis=0) if roots else np.ones_like(z)
        return np.stack([z.real, z.imag], 1), np.stack([w.real, w.imag], 1)
    return sampler


root = st.tuples(st.floats(-2, 2), st.floats(-2, 2)).map(lambda p: complex(*p)).filter(
    lambda a: abs(abs(a) - 1) > 0.1)


@settings(max_examples=60, deadline=None)
@given(st.lists(root, max_size=5))
def test_winding_counts_enclosed_roots(roots):
    s = _roots_field(roots)
    inside = sum(1 for a in roots if abs(a) < 1)
    # the base sampling must resolve the field: 5 roots at distance 0.1 turn
    # w by at most 50 rad per unit arc, under pi per step from n = 256 on
    ws = {winding_number(s, n=n).winding for n in (256, 512, 2048)}
    assert ws == {inside}


@settings(max_examples=60, deadline=None)
@given(st.lists(coef, min_size=4, max_size=4))
def test_admissible_homotopy_implies_winding_one(a):
    A = np.array(a).reshape(2, 2)

    def sampler(u):
        t = 2 * np.pi * np.asarray(u)
        P = np.stack([np.cos(t), np.sin(t)], 1)
        return P, P @ A.T

    samp = sample_loop(sampler, None)
    if np.linalg.norm(samp.values, axis=1).min() < 1e-3:
        return
    cert = homotopy_admissible(samp, (0.0, 0.0), tau_H=1e-6)
    w = winding_number(None, samples=samp).winding
    assert w == int(np.sign(np.linalg.det(A)))
    if cert.ok:
        assert w == 1
