from __future__ import annotations

import numpy as np
import pytest

from critlab.degree import (ZeroRecord, classify_zero, degree_report, field_sampler, find_t_zeros,
                            homotopy_admissible, index_of_zero, jac_t, levelset_curvature,
                            sample_loop, t_field, winding_number)
from critlab.errors import DegenerateJacobian, VanishingGradient, ZeroOnLoop
from critlab.geometry import circle_loop, make_domain, omega_epsilon, zero_curvature_set
from critlab.jets import Jet3, ScalarField, polynomial_jet
from critlab.mesh import generate_mesh
from critlab.solver import Nonlinearity, solve_semilinear

TORSION = {(0, 0): 0.25, (2, 0): -0.25, (0, 2): -0.25}


def _jet(**kw):
    vals = {k: 0.0 for k in ("u", "ux", "uy", "uxx", "uxy", "uyy", "uxxx", "uxxy", "uxyy", "uyyy")}
    vals.update(kw)
    return Jet3(np.zeros(2), **vals)


def _circle_sampler(V, r=1.0):
    def sampler(u):
        t = 2 * np.pi * np.asarray(u)
        P = r * np.stack([np.cos(t), np.sin(t)], 1)
        return P, V(P)
    return sampler


@pytest.fixture(scope="module")
def disk_torsion():
    m = generate_mesh(make_domain("disk", {"r": 1.0}), 0.05)
    return solve_semilinear(m, Nonlinearity("constant", 1.0)).field


@pytest.fixture(scope="module")
def superellipse_torsion():
    m = generate_mesh(make_domain("superellipse", {"p": 4.0}), 0.05)
    return solve_semilinear(m, Nonlinearity("constant", 1.0)).field


# -- T and the level-set curvature -----------------------------------------------

@pytest.mark.parametrize("q", [(0.3, 0.4), (-0.5, 0.1), (0.0, -0.7)])
def test_t_of_disk_torsion(q):
    assert np.allclose(t_field(polynomial_jet(TORSION, q)), np.asarray(q) / 4, atol=1e-15)


def test_t_vanishes_at_critical_jets():
    assert np.all(t_field(_jet(uxx=3.0, uxy=-2.0, uyy=1.0, uxxx=5.0)) == 0)


@pytest.mark.parametrize("q", [(1.0, 0.2), (-0.4, 0.5)])
def test_t_of_ellipse_torsion(q):
    a, b, c = 2.0, 1.0, 0.4
    jet = polynomial_jet({(0, 0): c, (2, 0): -c / a**2, (0, 2): -c / b**2}, q)
    assert np.allclose(t_field(jet), 4 * c * c / (a * a * b * b) * np.asarray(q), atol=1e-15)


def test_t_vectorized_matches_scalar(rng):
    A = rng.standard_normal((20, 10))
    T = t_field(A)
    J = jac_t(A)
    for k in range(20):
        jet = Jet3.from_array((0, 0), A[k])
        assert np.allclose(T[k], t_field(jet))
        assert np.allclose(J[k], jac_t(jet))


def test_jac_t_matches_finite_differences(rng):
    coeffs = {(i, j): rng.uniform(-1, 1) for i in range(4) for j in range(4 - i)}
    q = np.array([0.2, -0.3])
    d = 1e-6
    fd = np.stack([(t_field(polynomial_jet(coeffs, q + d * e)) - t_field(polynomial_jet(coeffs, q - d * e)))
                   / (2 * d) for e in np.eye(2)], 1)
    assert np.allclose(jac_t(polynomial_jet(coeffs, q)), fd, atol=1e-7)


@pytest.mark.parametrize("r", [0.2, 0.5, 0.9])
def test_levelset_curvature_of_disk_torsion(r):
    assert levelset_curvature(polynomial_jet(TORSION, (r * 0.6, r * 0.8))) == pytest.approx(1 / r, rel=1e-12)


def test_levelset_curvature_needs_gradient():
    with pytest.raises(VanishingGradient):
        levelset_curvature(polynomial_jet(TORSION, (0.0, 0.0)))


@pytest.mark.parametrize("family,params", [("disk", {}), ("ellipse", {}), ("superellipse", {"p": 4.0})])
def test_boundary_levelset_curvature_is_boundary_curvature(family, params):
    dom = make_domain(family, params)
    field = solve_semilinear(generate_mesh(dom, 0.05), Nonlinearity("gelfand", 1.0)).field
    t = np.arange(50) / 50
    kap = dom.geometry_t(t)[3]
    k = levelset_curvature(field.jets(dom.curve.point(t), t))
    assert np.abs(k - kap).max() <= 1e-8 * np.abs(kap).max()


# -- winding -----------------------------------------------------------------------

def test_winding_identity():
    assert winding_number(_circle_sampler(lambda P: P)).winding == 1


def test_winding_square():
    res = winding_number(_circle_sampler(lambda P: np.stack([P[:, 0]**2 - P[:, 1]**2,
                                                             2 * P[:, 0] * P[:, 1]], 1)))
    assert res.winding == 2
    assert res.min_norm == pytest.approx(1.0)


def test_winding_offset_center_is_zero():
    assert winding_number(_circle_sampler(lambda P: P - [2.0, 0.0])).winding == 0


def test_winding_of_t_on_disk_torsion(disk_torsion):
    loop = circle_loop((0.0, 0.0), 0.5)
    assert winding_number(field_sampler(disk_torsion, loop), loop).winding == 1


def test_zero_on_loop():
    with pytest.raises(ZeroOnLoop):
        winding_number(_circle_sampler(lambda P: P - [1.0, 0.0]), tau=1e-6)


def test_winding_refinement_invariant(disk_torsion):
    loop = circle_loop((0.1, 0.0), 0.7)
    s = field_sampler(disk_torsion, loop)
    w = {winding_number(s, loop, n=n).winding for n in (8, 16, 64, 256, 1024)}
    assert w == {1}


# -- homotopy ------------------------------------------------------------------------

def test_homotopy_disk_torsion(disk_torsion):
    loop = circle_loop((0.0, 0.0), 0.9)
    samp = sample_loop(field_sampler(disk_torsion, loop), loop)
    Tmax = np.linalg.norm(samp.values, axis=1).max()
    cert = homotopy_admissible(samp, (0.0, 0.0), tau_H=1e-3)
    assert cert.ok and cert.witness is None
    assert cert.min_abs_H > 0.2 * Tmax


def test_homotopy_superellipse_omega_epsilon(superellipse_torsion):
    dom = superellipse_torsion.mesh.domain
    loop = omega_epsilon(dom, [r.t0 for r in zero_curvature_set(dom)], 0.1)
    samp = sample_loop(field_sampler(superellipse_torsion, loop), loop)
    tau_H = 1e-3 * max(np.linalg.norm(samp.values, axis=1).max(), 2.0)
    cert = homotopy_admissible(samp, dom.centroid, tau_H)
    assert cert.ok
    # admissible homotopy forces the winding of T to equal that of q - p
    assert winding_number(None, loop, samples=samp).winding == 1


def test_homotopy_detects_zero_on_loop():
    # T constructed to vanish at (1, 0) on the unit circle
    samp = sample_loop(_circle_sampler(lambda P: P - [1.0, 0.0]), None)
    cert = homotopy_admissible(samp, (0.0, 0.0), tau_H=1e-6)
    assert not cert.ok
    t, q = cert.witness
    assert t == pytest.approx(1.0) and np.allclose(q, [1.0, 0.0])


def test_homotopy_zero_between_samples():
    # H(t, q) = (t A + (1 - t) I) q is singular at t = (sqrt(5) - 1) / 2 for this A
    A = np.array([[0.0, 1.0], [1.0, 1.0]])
    samp = sample_loop(_circle_sampler(lambda P: P @ A.T), None, n=64)
    cert = homotopy_admissible(samp, (0.0, 0.0), tau_H=1e-6)
    assert not cert.ok
    assert cert.witness[0] == pytest.approx((np.sqrt(5) - 1) / 2, abs=1e-2)
    assert winding_number(None, samples=samp).winding == -1


# -- zeros and indices ------------------------------------------------------------------

def test_index_critical_point_max():
    jet = polynomial_jet(TORSION, (0.0, 0.0))
    assert np.linalg.det(jac_t(jet)) == pytest.approx(np.linalg.det(jet.hessian()) ** 2)
    rec = ZeroRecord(jet.point, "critical_point_of_u", None, 0, jet)
    assert index_of_zero(rec) == 1


def test_index_saddle_is_plus_one():
    jet = _jet(uxx=1.0, uyy=-1.0)
    assert index_of_zero(ZeroRecord(jet.point, "critical_point_of_u", None, 0, jet)) == 1


def test_index_m_theta_jet():
    # u_xyy = -u_xxx is forced at the point by differentiating the PDE along x
    jet = _jet(uy=-1.0, uxxx=1.0, uxyy=-1.0)
    assert np.linalg.det(jac_t(jet)) == pytest.approx(-1.0)
    kind, theta = classify_zero(jet, 1e-6)
    assert kind == "m_theta_point" and theta == pytest.approx(np.pi)
    assert index_of_zero(ZeroRecord(jet.point, kind, theta, 0, jet)) == -1


def test_degenerate_jacobian():
    jet = _jet(uxx=1.0)  # Hessian singular at a critical point
    rec = ZeroRecord(jet.point, "critical_point_of_u", None, 0, jet)
    assert index_of_zero(rec) == 0
    with pytest.raises(DegenerateJacobian):
        index_of_zero(rec, strict=True)


def test_unresolved_has_index_zero():
    jet = _jet(uy=-1.0, uxy=0.5)
    kind, _ = classify_zero(jet, 1e-6)
    assert kind == "unresolved"
    assert index_of_zero(ZeroRecord(jet.point, kind, 0.0, 0, jet)) == 0


def test_find_zeros_disk_torsion(disk_torsion):
    zs = find_t_zeros(disk_torsion, circle_loop((0.0, 0.0), 0.9))
    assert len(zs) == 1
    assert zs[0].kind == "critical_point_of_u" and zs[0].index == 1
    assert np.linalg.norm(zs[0].point) < 1e-3


def test_find_zeros_ellipse_torsion():
    dom = make_domain("ellipse", {"a": 2.0, "b": 1.0})
    field = solve_semilinear(generate_mesh(dom, 0.05), Nonlinearity("constant", 1.0)).field
    from critlab.geometry import boundary_loop
    rep = degree_report(field, boundary_loop(dom))
    assert rep.winding == 1 and rep.index_sum == 1 and rep.consistent
    assert [z.kind for z in rep.zeros] == ["critical_point_of_u"]
    assert np.linalg.norm(rep.zeros[0].point) < 1e-3


def test_synthetic_m_theta_zero_found():
    # u = (x-a)^3/3 - (x-a)(y-b)^2 + y has an M_0-type zero of T at (a, b)
    a, b = 0.2, 0.1
    mesh = generate_mesh(make_domain("disk", {"r": 1.0}), 0.05)
    x, y = mesh.vertices.T
    field = ScalarField(mesh, (x - a) ** 3 / 3 - (x - a) * (y - b) ** 2 + y)
    zs = find_t_zeros(field, circle_loop((0.0, 0.0), 0.5), tau_grad=1e-6)
    hits = [z for z in zs if np.linalg.norm(z.point - [a, b]) < 1e-6]
    assert len(hits) == 1
    assert hits[0].kind == "m_theta_point" and hits[0].index == -1


def test_degree_report_disk(disk_torsion):
    rep = degree_report(disk_torsion, circle_loop((0.0, 0.0), 0.9))
    assert (rep.winding, len(rep.zeros), rep.index_sum, rep.consistent) == (1, 1, 1, True)
    d = rep.to_dict()
    assert set(d) == {"winding", "index_sum", "consistent", "zeros"}
    assert set(d["zeros"][0]) == {"x", "y", "kind", "theta", "index"}


def test_degree_report_superellipse(superellipse_torsion):
    dom = superellipse_torsion.mesh.domain
    loop = omega_epsilon(dom, [r.t0 for r in zero_curvature_set(dom)], 0.1)
    rep = degree_report(superellipse_torsion, loop)
    assert rep.winding == 1 and rep.consistent
