from __future__ import annotations

import numpy as np
import pytest

from critlab.errors import HypothesesViolated, MultipleXi, NoXi
from critlab.geometry import make_domain, zero_curvature_set
from critlab.jets import ScalarField, polynomial_jet
from critlab.mesh import generate_mesh
from critlab.nodal import (branch_slopes, degenerate_boundary_analysis, detect_m_theta,
                           directional_field, nodal_battery, trace_nodal_set, trace_zero_set)
from critlab.solver import Nonlinearity, solve_semilinear


@pytest.fixture(scope="module")
def ellipse_torsion():
    m = generate_mesh(make_domain("ellipse", {"a": 2.0, "b": 1.0}), 0.05)
    x, y = m.vertices.T
    return ScalarField(m, 0.4 * (1 - x**2 / 4 - y**2), dirichlet=True)


@pytest.fixture(scope="module")
def stadium_mesh():
    return generate_mesh(make_domain("stadium", {}), 0.05)


@pytest.fixture(scope="module")
def cap():
    """Disk of radius 1/2 tangent to the x-axis at the origin from below."""
    dom = make_domain("disk", {"r": 0.5, "center": [0.0, -0.5]})
    return {h: generate_mesh(dom, h, anchors=[0.25]) for h in (0.02, 0.01)}


def _traced_branch(mesh, coeffs):
    x, y = mesh.vertices.T
    F = sum(c * x**i * y**j for (i, j), c in coeffs.items())
    curves = trace_zero_set(ScalarField(mesh, F), 0.0)
    return min(curves, key=lambda c: np.linalg.norm(c.polyline, axis=1).min())


# -- directional fields and nodal sets ---------------------------------------------

def test_directional_field_of_ellipse_torsion(ellipse_torsion):
    d = directional_field(ellipse_torsion, 0.0)
    x = ellipse_torsion.mesh.vertices[:, 0]
    assert np.abs(d.values - (-2 * 0.4 * x / 4)).max() < 1e-8


def test_directional_field_antisymmetric(ellipse_torsion):
    a = directional_field(ellipse_torsion, 0.7).values
    b = directional_field(ellipse_torsion, 0.7 + np.pi).values
    assert np.abs(a + b).max() < 1e-12


@pytest.mark.parametrize("theta", [0.0, 0.25 * np.pi, 0.5 * np.pi])
def test_ellipse_nodal_line(ellipse_torsion, theta):
    curves = trace_nodal_set(ellipse_torsion, theta)
    assert len(curves) == 1
    c = curves[0]
    assert not c.closed_loop and not c.self_intersects and c.n_boundary_endpoints == 2
    # grad u . e_theta = 0 is the line x cos(theta)/4 + y sin(theta) = 0
    x, y = c.polyline.T
    resid = np.abs(x * np.cos(theta) / 4 + y * np.sin(theta))
    assert resid[1:-1].max() < 1e-6
    # the ends are projected onto the curved boundary
    assert resid[[0, -1]].max() < 0.05**2
    step = np.linalg.norm(np.diff(c.polyline, axis=0), axis=1)
    assert step.max() <= 3 * 0.05


def test_battery_on_ellipse(ellipse_torsion):
    bat = nodal_battery(ellipse_torsion, np.pi * np.arange(16) / 16)
    assert bat.ok and bat.n_m_theta == 0


def test_critical_point_is_intersection_of_nodal_lines(ellipse_torsion):
    a = trace_nodal_set(ellipse_torsion, 0.0)[0].polyline
    b = trace_nodal_set(ellipse_torsion, 0.5 * np.pi)[0].polyline
    d = np.linalg.norm(a[:, None] - b[None], axis=2)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    assert np.linalg.norm(0.5 * (a[i] + b[j])) < 0.05


def test_m_theta_synthetic_point():
    a, b = 0.2, 0.1
    mesh = generate_mesh(make_domain("disk", {"r": 1.0}), 0.05)
    x, y = mesh.vertices.T
    field = ScalarField(mesh, (x - a) ** 3 / 3 - (x - a) * (y - b) ** 2 + y)
    pts = detect_m_theta(field, 0.0, tau_grad=1e-6)
    assert len(pts) == 1
    assert np.linalg.norm(pts[0] - [a, b]) <= 2 * mesh.h


# -- branch slopes ----------------------------------------------------------------

def test_branch_slopes_reference_quadratic(cap):
    mesh = cap[0.01]
    res = branch_slopes(polynomial_jet({(2, 0): -2.0, (0, 2): 1.0}, (0, 0)),
                        _traced_branch(mesh, {(2, 0): -2.0, (0, 2): 1.0}),
                        exclude_radius=3 * mesh.h)
    assert res.slope_formula[0] == pytest.approx(np.sqrt(2))
    assert res.match and res.rel_error <= 0.02


def test_branch_slopes_formula():
    jet = polynomial_jet({(2, 0): -0.5, (0, 2): 2.0}, (0, 0))
    mesh = generate_mesh(make_domain("disk", {"r": 0.5, "center": [0.0, -0.5]}), 0.02, anchors=[0.25])
    res = branch_slopes(jet, _traced_branch(mesh, {(2, 0): -0.5, (0, 2): 2.0}), exclude_radius=0.06)
    assert res.slope_formula == pytest.approx((0.5, -0.5))


def test_branch_slopes_hypotheses():
    dummy = None
    with pytest.raises(HypothesesViolated) as info:
        branch_slopes(polynomial_jet({(2, 0): 1.0, (0, 2): 1.0}, (0, 0)), dummy)
    assert len(info.value.failures) == 1 and "F_xx" in info.value.failures[0]
    with pytest.raises(HypothesesViolated) as info:
        branch_slopes(polynomial_jet({(1, 1): 1.0, (2, 0): -1.0, (0, 2): 1.0, (0, 1): 0.1}, (0, 0)), dummy)
    assert len(info.value.failures) == 2


def test_branch_slopes_random_instances(cap):
    rng = np.random.default_rng(7)
    mesh = cap[0.02]
    for _ in range(5):
        co = {(2, 0): rng.uniform(-3, -0.5) / 2, (0, 2): rng.uniform(0.5, 3) / 2}
        for k, c in zip([(3, 0), (2, 1), (1, 2), (0, 3)], rng.uniform(-0.5, 0.5, 4)):
            co[k] = c
        res = branch_slopes(polynomial_jet(co, (0, 0)), _traced_branch(mesh, co),
                            exclude_radius=3 * mesh.h)
        assert res.match


# -- degenerate boundary points ----------------------------------------------------

def test_stadium_segment_xi(stadium_mesh):
    dom = stadium_mesh.domain
    field = solve_semilinear(stadium_mesh, Nonlinearity("constant", 1.0)).field
    site = zero_curvature_set(dom)[0]
    rep = degenerate_boundary_analysis(field, dom, site)
    assert rep.case == "segment"
    assert np.linalg.norm(rep.xi) <= 2 * stadium_mesh.h  # symmetric domain, midpoint at the origin
    assert rep.checks["midpoint_offset"] <= 2 * stadium_mesh.h
    assert rep.checks["uxy_sign_change"] and rep.checks["hopf"] and rep.checks["flat"]
    assert rep.checks["uxxy_positive"]
    assert rep.u_y < 0


def test_superellipse_isolated_sites_are_case_two():
    dom = make_domain("superellipse", {"p": 4.0})
    mesh = generate_mesh(dom, 0.05)
    field = solve_semilinear(mesh, Nonlinearity("gelfand", 1.0)).field
    for site in zero_curvature_set(dom):
        rep = degenerate_boundary_analysis(field, dom, site)
        assert rep.case == "case2_uxy_zero"
        assert rep.checks["hopf"] and rep.checks["flat"]
        assert rep.signs_ok


def test_multiple_xi(stadium_mesh):
    x, y = stadium_mesh.vertices.T
    field = ScalarField(stadium_mesh, -y - 0.05 * (x * x - 0.09) ** 2, dirichlet=False)
    site = zero_curvature_set(stadium_mesh.domain)[0]
    with pytest.raises(MultipleXi):
        degenerate_boundary_analysis(field, stadium_mesh.domain, site, tau_grad=1e-6)


def test_no_xi(stadium_mesh):
    x, y = stadium_mesh.vertices.T
    field = ScalarField(stadium_mesh, -y + 0.1 * (x - 10.0) ** 2, dirichlet=False)
    site = zero_curvature_set(stadium_mesh.domain)[0]
    with pytest.raises(NoXi):
        degenerate_boundary_analysis(field, stadium_mesh.domain, site, tau_grad=1e-6)
