"""Projection, evaluation, norms and errors for discontinuous P1 fields."""

import numpy as np
import pytest

from porodg import DGScalarField, DGVectorField, MeshGeometry, build_structured_tet_mesh
from porodg.errors import SamplingError
from porodg.fields import (
    broken_grad_error,
    broken_grad_norm,
    dg_norm,
    evaluate_scalar,
    l2_error,
    l2_norm,
    l2_project,
    l2_project_vector,
    locate_points,
)
from porodg.mesh import tag_boundary
from porodg.quadrature import tet_rule

UNIT_BOX = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))


@pytest.fixture(scope="module")
def geom():
    mesh = build_structured_tet_mesh(2, 2, 2, UNIT_BOX)
    tag_boundary(mesh, lambda c: "dirichlet", lambda c: "dirichlet")
    return MeshGeometry(mesh)


def test_project_constant(geom):
    f = l2_project(lambda p: np.full(p.shape[0], 7.0), geom)
    assert np.allclose(f.coefs, 7.0, atol=1e-12)


def test_project_linear_exact(geom):
    f = l2_project(lambda p: p[:, 0], geom)
    nodal = geom.mesh.vertices[geom.mesh.tets][:, :, 0]
    assert np.allclose(f.coefs, nodal, atol=1e-12)


def test_project_quadratic_best_approximation():
    # single reference tet; compare against projection computed from exact
    # monomial integrals on the reference tet (independent of the library
    # quadrature path)
    from porodg.mesh import Mesh, build_face_topology

    vertices = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    mesh = build_face_topology(Mesh(vertices=vertices, tets=np.array([[0, 1, 2, 3]])))
    geom1 = MeshGeometry(mesh)
    f = l2_project(lambda p: p[:, 0] ** 2, geom1)

    # exact local mass matrix V/20 (1 + delta_ij) with V = 1/6
    V = 1.0 / 6.0
    M = V / 20.0 * (np.ones((4, 4)) + np.eye(4))
    # exact (x^2, phi_i): phi = (1-x-y-z, x, y, z)
    # int x^2 = 1/60; int x^3 = 1/120; int x^2 y = int x^2 z = 1/360
    rhs = np.array([1.0 / 60.0 - 1.0 / 120.0 - 2.0 / 360.0, 1.0 / 120.0, 1.0 / 360.0, 1.0 / 360.0])
    want = np.linalg.solve(M, rhs)
    assert np.allclose(f.coefs[0], want, atol=1e-13)

    # the projection error equals the best-approximation error
    err = l2_error(f, lambda p: p[:, 0] ** 2, degree=8)
    exact_sq = 1.0 / 210.0  # int x^4 over the reference tet
    best_sq = exact_sq - rhs @ want
    assert err**2 == pytest.approx(best_sq, rel=1e-10)


def test_project_vector(geom):
    u = l2_project_vector(lambda p: np.stack([p[:, 0], 2 * p[:, 1], p[:, 2] - 1.0], axis=1), geom)
    verts = geom.mesh.vertices[geom.mesh.tets]
    assert np.allclose(u.coefs[0], verts[:, :, 0], atol=1e-12)
    assert np.allclose(u.coefs[1], 2 * verts[:, :, 1], atol=1e-12)
    assert np.allclose(u.coefs[2], verts[:, :, 2] - 1.0, atol=1e-12)


def test_l2_norm_of_constant(geom):
    f = DGScalarField.constant(geom.mesh, 3.0)
    assert l2_norm(f, geom) == pytest.approx(3.0, rel=1e-13)
    assert broken_grad_norm(f, geom) == pytest.approx(0.0, abs=1e-13)


def test_dg_norm_constant_no_dirichlet():
    mesh = build_structured_tet_mesh(2, 2, 2, UNIT_BOX)
    tag_boundary(mesh, lambda c: "neumann", lambda c: "neumann")
    g = MeshGeometry(mesh)
    f = DGScalarField.constant(mesh, 5.0)
    assert dg_norm(f, g, "pressure") == pytest.approx(0.0, abs=1e-12)


def test_dg_norm_linear_field(geom):
    # q = x: grad part 1, boundary jumps on Dirichlet faces contribute
    f = l2_project(lambda p: p[:, 0], geom)
    n = dg_norm(f, geom, "pressure")
    assert n > 1.0  # gradient part alone is 1
    g = DGScalarField.constant(geom.mesh, 1.0)
    # constant field with all-Dirichlet boundary: pure boundary jump norm
    nb = dg_norm(g, geom, "pressure")
    want = np.sqrt(
        np.sum(geom.areas[geom.faces_pressure_dirichlet] / geom.h_e[geom.faces_pressure_dirichlet])
    )
    assert nb == pytest.approx(want, rel=1e-12)


def test_l2_error_of_projection_matches_independent_quadrature(geom):
    exact = lambda p: np.sin(p[:, 0]) * np.cos(p[:, 1])
    f = l2_project(exact, geom)
    err = l2_error(f, exact, degree=7)
    # independently coded quadrature of the same degree
    pts, w = tet_rule(7)
    coords = geom.mesh.elem_coords
    B = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)
    qp = coords[:, None, 0, :] + np.einsum("edj,qj->eqd", B, pts)
    qw = np.abs(np.linalg.det(B))[:, None] * w[None, :]
    from porodg.quadrature import p1_values

    vals = np.einsum("ei,qi->eq", f.coefs, p1_values(pts))
    ex = exact(qp.reshape(-1, 3)).reshape(qp.shape[:2])
    want = np.sqrt(np.sum(qw * (ex - vals) ** 2))
    assert err == pytest.approx(want, rel=1e-9)


def test_projection_error_second_order():
    exact = lambda p: np.sin(p[:, 0]) * np.cos(p[:, 1]) + p[:, 2] ** 2
    errs = []
    for n in (2, 4, 8):
        mesh = build_structured_tet_mesh(n, n, n, UNIT_BOX)
        g = MeshGeometry(mesh)
        errs.append(l2_error(l2_project(exact, g), exact))
    r1 = np.log2(errs[0] / errs[1])
    r2 = np.log2(errs[1] / errs[2])
    assert 1.9 < r1 < 2.1
    assert 1.9 < r2 < 2.1


def test_broken_grad_error():
    mesh = build_structured_tet_mesh(4, 4, 4, UNIT_BOX)
    g = MeshGeometry(mesh)
    f = l2_project(lambda p: p[:, 0] * 2.0 + p[:, 1], g)
    err = broken_grad_error(
        f, lambda p: np.tile(np.array([2.0, 1.0, 0.0]), (p.shape[0], 1))
    )
    assert err < 1e-12


def test_locate_points_and_evaluate(geom):
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.02, 0.98, (200, 3))
    f = l2_project(lambda p: 1.0 + 2.0 * p[:, 0] - p[:, 1] + 0.5 * p[:, 2], geom)
    vals = evaluate_scalar(f, pts)
    want = 1.0 + 2.0 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 2]
    assert np.allclose(vals, want, atol=1e-12)


def test_locate_points_on_boundary_and_interfaces(geom):
    pts = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0],
            [0.5, 0.5, 0.5],  # cell corner interface
            [0.5, 0.25, 0.25],
            [1.0, 0.5, 0.5],
        ]
    )
    elems = locate_points(geom.mesh, pts)
    assert np.all(elems >= 0)
    # interface points take the lowest containing element id
    coords = geom.mesh.elem_coords[elems]
    B = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)
    local = np.einsum("pjd,pd->pj", np.linalg.inv(B), pts - coords[:, 0, :])
    bary = np.concatenate([1 - local.sum(axis=1, keepdims=True), local], axis=1)
    assert bary.min() >= -1e-9


def test_locate_points_outside_raises(geom):
    with pytest.raises(SamplingError):
        locate_points(geom.mesh, np.array([[2.0, 0.5, 0.5]]))


def test_field_dof_round_trip(geom):
    rng = np.random.default_rng(1)
    coefs = rng.normal(size=(geom.n_elem, 4))
    f = DGScalarField(geom.mesh, coefs)
    g = DGScalarField.from_dofs(geom.mesh, f.dofs())
    assert np.array_equal(f.coefs, g.coefs)
    u = DGVectorField(geom.mesh, rng.normal(size=(3, geom.n_elem, 4)))
    v = DGVectorField.from_dofs(geom.mesh, u.dofs())
    assert np.array_equal(u.coefs, v.coefs)
