"""Assembly of the DG forms: exactness, symmetry, coercivity, coupling identities."""

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from porodg import (
    DGScalarField,
    DGVectorField,
    DiscretizationParams,
    MeshGeometry,
    PhysicalParams,
    build_structured_tet_mesh,
    tag_boundary,
)
from porodg.coefficients import ConstantCoefficient, ElementCoefficient, SpatialCoefficient
from porodg.errors import AssemblyError
from porodg.fields import dg_norm, l2_project
from porodg.forms import (
    assemble_bp,
    assemble_bp_rhs,
    assemble_bu,
    assemble_diffusion,
    assemble_elasticity,
    assemble_rhs_elasticity,
    assemble_rhs_flow,
    assemble_vector_mass,
    assemble_weighted_mass,
)
from porodg.mesh import Mesh, build_face_topology

UNIT_BOX = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
DISC = DiscretizationParams(sigma_p=20.0, sigma_u=14.0)
ELASTIC = PhysicalParams(
    mu_w=1.0, mu_o=1.0, inv_kw=0.1, inv_ko=0.1, inv_ks=0.1,
    lam=1.0, mu=0.6, alpha=0.9,
)


def unit_mesh(n, pressure="dirichlet", displacement="dirichlet"):
    mesh = build_structured_tet_mesh(n, n, n, UNIT_BOX)
    tag_boundary(mesh, lambda c: pressure, lambda c: displacement)
    return mesh


def single_tet_geom(tagged="neumann"):
    vertices = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    mesh = build_face_topology(Mesh(vertices=vertices, tets=np.array([[0, 1, 2, 3]])))
    tag_boundary(mesh, lambda c: tagged, lambda c: tagged)
    return MeshGeometry(mesh)


def continuous_scalar(geom, nodal_fn):
    """Globally continuous member of the DG space from vertex values."""
    vals = nodal_fn(geom.mesh.vertices)
    return DGScalarField(geom.mesh, vals[geom.mesh.tets])


def continuous_vector(geom, nodal_fn):
    vals = nodal_fn(geom.mesh.vertices)  # (nv, 3)
    coefs = np.stack([vals[geom.mesh.tets][:, :, c] for c in range(3)])
    return DGVectorField(geom.mesh, coefs)


# ----------------------------------------------------------------------
# weighted mass


def test_mass_reference_tet():
    geom = single_tet_geom()
    M = assemble_weighted_mass(1.0, geom).toarray()
    want = (1.0 / 6.0) / 20.0 * (np.ones((4, 4)) + np.eye(4))
    assert np.allclose(M, want, atol=1e-15)
    assert M[0, 0] == pytest.approx(1.0 / 60.0)
    assert M[0, 1] == pytest.approx(1.0 / 120.0)


def test_mass_zero_weight():
    geom = MeshGeometry(unit_mesh(2))
    M = assemble_weighted_mass(0.0, geom)
    assert M.nnz == 0 or np.max(np.abs(M.data)) == 0.0


def test_mass_nonnegative_weight_psd():
    geom = MeshGeometry(unit_mesh(1))
    w = SpatialCoefficient(lambda p: 0.5 + p[:, 0] ** 2)
    M = assemble_weighted_mass(w, geom).toarray()
    assert np.allclose(M, M.T, atol=1e-15)
    assert np.linalg.eigvalsh(M).min() >= -1e-14


# ----------------------------------------------------------------------
# diffusion form a


def test_diffusion_single_tet_volume_only():
    geom = single_tet_geom("neumann")
    A = assemble_diffusion(1.0, geom, DISC).toarray()
    G = geom.grads[0]
    want = (1.0 / 6.0) * G @ G.T
    assert np.allclose(A, want, atol=1e-14)


def test_diffusion_symmetric_positive_definite_one_cube():
    mesh = unit_mesh(1)
    geom = MeshGeometry(mesh)
    A = assemble_diffusion(1.0, geom, DiscretizationParams(sigma_p=100.0, sigma_u=14.0)).toarray()
    assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
    assert np.linalg.eigvalsh(A).min() > 0.0


def test_diffusion_nonsymmetric_with_plus_one():
    geom = MeshGeometry(unit_mesh(1))
    disc = DiscretizationParams(sigma_p=20.0, sigma_u=14.0, eps_p=1)
    A = assemble_diffusion(1.0, geom, disc).toarray()
    assert np.max(np.abs(A - A.T)) > 1e-8 * np.max(np.abs(A))


def test_diffusion_constants_in_kernel_without_dirichlet():
    geom = MeshGeometry(unit_mesh(2, pressure="neumann"))
    A = assemble_diffusion(2.5, geom, DISC)
    q = DGScalarField.constant(geom.mesh, 4.0).dofs()
    assert np.max(np.abs(A @ q)) < 1e-12


def test_diffusion_rejects_nonpositive_coefficient():
    geom = MeshGeometry(unit_mesh(1))
    with pytest.raises(AssemblyError):
        assemble_diffusion(SpatialCoefficient(lambda p: p[:, 0] - 0.5), geom, DISC)


def test_diffusion_coercivity_sigma20(subtests=None):
    # q^T A q >= 0.5 ||q||_DG^2 with the symmetric variant and sigma_p = 20
    geom = MeshGeometry(unit_mesh(4))
    A = assemble_diffusion(1.0, geom, DISC)
    rng = np.random.default_rng(123)
    for _ in range(100):
        q = rng.normal(size=geom.ndof_scalar)
        field = DGScalarField.from_dofs(geom.mesh, q)
        lhs = q @ (A @ q)
        assert lhs >= 0.5 * dg_norm(field, geom, "pressure") ** 2 - 1e-10


def test_diffusion_patch_test():
    # a constant-coefficient SIPG solve reproduces any linear solution with
    # matching Dirichlet data on all faces
    for chi in (1.0, 3.7):
        geom = MeshGeometry(unit_mesh(2))
        exact = lambda p: 1.0 + 2.0 * p[:, 0] - 3.0 * p[:, 1] + 0.5 * p[:, 2]
        A = assemble_diffusion(chi, geom, DISC)
        rhs = assemble_rhs_flow(
            geom, DISC, chi, 0.0,
            source=lambda p, t: np.zeros(p.shape[0]),
            p_dirichlet=lambda p, t: exact(p),
            g_neumann=None,
        )
        x = spla.spsolve(A.tocsc(), rhs)
        err = DGScalarField.from_dofs(geom.mesh, x - l2_project(exact, geom).dofs())
        assert dg_norm(err, geom, "pressure") < 1e-10


def test_diffusion_element_coefficient_two_sided():
    # discontinuous chi: both side values enter the face terms; matrix stays finite
    mesh = unit_mesh(2)
    geom = MeshGeometry(mesh)
    K = np.where(geom.mesh.elem_centroids[:, 0] < 0.5, 1.0, 100.0)
    A = assemble_diffusion(ElementCoefficient(K), geom, DISC)
    assert np.all(np.isfinite(A.data))


# ----------------------------------------------------------------------
# elasticity form c


def test_elasticity_single_tet_volume_terms():
    geom = single_tet_geom("neumann")
    C = assemble_elasticity(geom, ELASTIC, DISC).toarray()
    G = geom.grads[0]
    V = 1.0 / 6.0
    want = np.zeros((12, 12))
    for d in range(3):
        for i in range(4):
            for c in range(3):
                for j in range(4):
                    val = ELASTIC.mu * (d == c) * V * (G[i] @ G[j])
                    val += (ELASTIC.lam + ELASTIC.mu) * V * G[i, d] * G[j, c]
                    want[d * 4 + i, c * 4 + j] = val
    assert np.allclose(C, want, atol=1e-14)


def test_elasticity_rigid_translation_kernel():
    geom = MeshGeometry(unit_mesh(2, displacement="neumann"))
    C = assemble_elasticity(geom, ELASTIC, DISC)
    v = DGVectorField.constant(geom.mesh, [1.0, -2.0, 0.5]).dofs()
    assert np.max(np.abs(C @ v)) < 1e-12


def test_elasticity_coercivity_sigma14():
    geom = MeshGeometry(unit_mesh(3))
    C = assemble_elasticity(geom, ELASTIC, DISC)
    rng = np.random.default_rng(77)
    for _ in range(100):
        v = rng.normal(size=geom.ndof_vector)
        field = DGVectorField.from_dofs(geom.mesh, v)
        assert v @ (C @ v) >= 0.5 * dg_norm(field, geom, "displacement") ** 2 - 1e-10


def test_elasticity_patch_test():
    geom = MeshGeometry(unit_mesh(2))
    M = np.array([[0.2, -0.3, 0.1], [0.0, 0.4, -0.2], [0.5, 0.1, 0.3]])
    b = np.array([1.0, -2.0, 0.5])
    exact = lambda p: p @ M.T + b
    C = assemble_elasticity(geom, ELASTIC, DISC)
    rhs = assemble_rhs_elasticity(
        geom, DISC, ELASTIC, 0.0,
        source=lambda p, t: np.zeros((p.shape[0], 3)),
        u_dirichlet=lambda p, t: exact(p),
        traction=None,
    )
    x = spla.spsolve(C.tocsc(), rhs)
    verts = geom.mesh.vertices[geom.mesh.tets]  # (nE, 4, 3)
    want = np.stack([exact(verts.reshape(-1, 3))[:, c].reshape(-1, 4) for c in range(3)])
    got = x.reshape(3, geom.n_elem, 4)
    assert np.max(np.abs(got - want)) < 1e-9


# ----------------------------------------------------------------------
# coupling forms b_u and b_p


def test_bu_zero_displacement():
    geom = MeshGeometry(unit_mesh(2))
    B = assemble_bu(1.0, geom)
    assert np.max(np.abs(B @ np.zeros(geom.ndof_vector))) == 0.0


def test_bu_continuous_tangential_field_is_volume_integral():
    # u continuous with u.n = 0 on the boundary, q continuous:
    # b_u(1; u, q) = -(u, grad q) over the domain
    geom = MeshGeometry(unit_mesh(3))
    verts = geom.mesh.vertices

    def nodal_u(p):
        u = np.stack([np.sin(p[:, 1]), p[:, 2] ** 2, np.cos(p[:, 0])], axis=1)
        for c, axis in ((0, 0), (1, 1), (2, 2)):
            on_bdy = (np.abs(p[:, axis]) < 1e-12) | (np.abs(p[:, axis] - 1.0) < 1e-12)
            u[on_bdy, c] = 0.0
        return u

    u = continuous_vector(geom, nodal_u)
    q = continuous_scalar(geom, lambda p: 1.0 + p[:, 0] - 2.0 * p[:, 1] + 0.3 * p[:, 2])
    B = assemble_bu(1.0, geom)
    got = q.dofs() @ (B @ u.dofs())

    # direct volume quadrature oracle
    uv = np.stack([geom.field_volume_values(u.coefs[c]) for c in range(3)], axis=-1)
    gq = geom.field_volume_gradients(q.coefs)  # (nE, 3)
    want = -np.einsum("eq,eqd,ed->", geom.vol_qw, uv, gq)
    assert got == pytest.approx(want, abs=1e-13)


def test_bu_constant_vector_face_sum():
    # for u = const and chi = 1 the volume part telescopes into the face sum,
    # so the total form vanishes; the face part alone equals the face oracle
    geom = MeshGeometry(unit_mesh(2))
    rng = np.random.default_rng(4)
    q = DGScalarField.from_dofs(geom.mesh, rng.normal(size=geom.ndof_scalar))
    cvec = np.array([0.7, -1.3, 0.4])
    u = DGVectorField.constant(geom.mesh, cvec)
    B = assemble_bu(1.0, geom)
    total = q.dofs() @ (B @ u.dofs())
    assert total == pytest.approx(0.0, abs=1e-12)

    # independent face-sum oracle for sum_e ({c.n}, [q])_e
    want = 0.0
    m = geom.mesh
    for f in range(m.num_faces):
        cn = cvec @ m.face_normals[f]
        s0 = geom.field_face_values(q.coefs, 0)[f]
        s1 = geom.field_face_values(q.coefs, 1)[f]
        jump = s0 - s1 if m.face_elems[f, 1] >= 0 else s0
        want += cn * np.sum(geom.face_qw[f] * jump)
    # volume part must equal -want so that the total vanishes
    uv = np.stack([geom.field_volume_values(u.coefs[c]) for c in range(3)], axis=-1)
    gq = np.broadcast_to(geom.field_volume_gradients(q.coefs)[:, None, :], uv.shape)
    vol = -np.einsum("eq,eqd,eqd->", geom.vol_qw, uv, gq)
    assert vol == pytest.approx(-want, rel=1e-12, abs=1e-13)


def test_bp_constant_annihilated():
    geom = MeshGeometry(unit_mesh(2))
    Bp = assemble_bp(geom)
    q = DGScalarField.constant(geom.mesh, 9.0)
    assert np.max(np.abs(Bp @ q.dofs())) < 1e-13


def test_bp_linear_pressure_against_volume_integral():
    geom = MeshGeometry(unit_mesh(2))
    q = continuous_scalar(geom, lambda p: p[:, 0])
    v = continuous_vector(
        geom, lambda p: np.stack([p[:, 1] + 1.0, p[:, 0] * 2.0, -p[:, 2]], axis=1)
    )
    Bp = assemble_bp(geom)
    got = v.dofs() @ (Bp @ q.dofs())
    vv = np.stack([geom.field_volume_values(v.coefs[c]) for c in range(3)], axis=-1)
    want = np.einsum("eq,eq->", geom.vol_qw, vv[:, :, 0])  # (e_x, v)
    assert got == pytest.approx(want, rel=1e-13)


def test_bp_bu_duality_on_continuous_subspace():
    # continuous q, continuous v with v.n = 0 on the boundary:
    # b_p(q, v) = -b_u(1; v, q)
    geom = MeshGeometry(unit_mesh(3))

    def nodal_v(p):
        v = np.stack([p[:, 1] * (1 - p[:, 1]), np.sin(p[:, 0]), p[:, 0] + p[:, 1]], axis=1)
        for c, axis in ((0, 0), (1, 1), (2, 2)):
            on_bdy = (np.abs(p[:, axis]) < 1e-12) | (np.abs(p[:, axis] - 1.0) < 1e-12)
            v[on_bdy, c] = 0.0
        return v

    v = continuous_vector(geom, nodal_v)
    q = continuous_scalar(geom, lambda p: np.cos(p[:, 0]) + p[:, 1] ** 2)
    got_bp = v.dofs() @ (assemble_bp(geom) @ q.dofs())
    got_bu = q.dofs() @ (assemble_bu(1.0, geom) @ v.dofs())
    assert got_bp == pytest.approx(-got_bu, rel=1e-12, abs=1e-13)


def test_bu_field_coefficient_chain_rule():
    # chi a smooth spatial function with registered gradient: b_u assembled
    # with the chain-rule volume expansion matches a direct quadrature oracle
    geom = MeshGeometry(unit_mesh(2))
    chi = SpatialCoefficient(
        lambda p: 1.0 + 0.5 * p[:, 0] + 0.25 * p[:, 1],
        grad=lambda p: np.tile(np.array([0.5, 0.25, 0.0]), (p.shape[0], 1)),
    )
    rng = np.random.default_rng(8)
    u = DGVectorField.from_dofs(geom.mesh, rng.normal(size=geom.ndof_vector))
    q = DGScalarField.from_dofs(geom.mesh, rng.normal(size=geom.ndof_scalar))
    got = q.dofs() @ (assemble_bu(chi, geom) @ u.dofs())

    chiv = chi.volume_values(geom)
    dchiv = chi.volume_gradients(geom)
    uv = np.stack([geom.field_volume_values(u.coefs[c]) for c in range(3)], axis=-1)
    qv = geom.field_volume_values(q.coefs)
    gq = geom.field_volume_gradients(q.coefs)
    grad_chiq = chiv[:, :, None] * np.broadcast_to(gq[:, None, :], uv.shape) + (
        qv[:, :, None] * dchiv
    )
    vol = -np.einsum("eq,eqd,eqd->", geom.vol_qw, uv, grad_chiq)

    face = 0.0
    m = geom.mesh
    chif = [chi.face_values(geom, s) for s in range(2)]
    for f in range(m.num_faces):
        n = m.face_normals[f]
        u0 = np.stack([geom.field_face_values(u.coefs[c], 0)[f] for c in range(3)], -1)
        u1 = np.stack([geom.field_face_values(u.coefs[c], 1)[f] for c in range(3)], -1)
        q0 = geom.field_face_values(q.coefs, 0)[f]
        q1 = geom.field_face_values(q.coefs, 1)[f]
        if m.face_elems[f, 1] >= 0:
            avg_un = 0.5 * (u0 @ n + u1 @ n)
            jump_cq = chif[0][f] * q0 - chif[1][f] * q1
        else:
            avg_un = u0 @ n
            jump_cq = chif[0][f] * q0
        face += np.sum(geom.face_qw[f] * avg_un * jump_cq)
    assert got == pytest.approx(vol + face, rel=1e-12, abs=1e-13)


def test_bp_rhs_matches_matrix_for_p1_argument():
    geom = MeshGeometry(unit_mesh(2))
    rng = np.random.default_rng(6)
    q = DGScalarField.from_dofs(geom.mesh, rng.normal(size=geom.ndof_scalar))

    class P1Expr:
        def volume_values(self, g):
            return g.field_volume_values(q.coefs)

        def volume_gradients(self, g):
            grad = g.field_volume_gradients(q.coefs)
            return np.broadcast_to(grad[:, None, :], g.vol_qw.shape + (3,))

        def face_values(self, g, side):
            return g.field_face_values(q.coefs, side)

    vec = assemble_bp_rhs(P1Expr(), geom)
    want = assemble_bp(geom) @ q.dofs()
    assert np.allclose(vec, want, atol=1e-13)


# ----------------------------------------------------------------------
# right-hand sides


def test_rhs_flow_zero_data():
    geom = MeshGeometry(unit_mesh(2))
    rhs = assemble_rhs_flow(
        geom, DISC, 1.0, 0.0,
        source=lambda p, t: np.zeros(p.shape[0]),
        p_dirichlet=lambda p, t: np.zeros(p.shape[0]),
        g_neumann=None,
    )
    assert np.max(np.abs(rhs)) == 0.0


def test_rhs_flow_pure_penalty_face_sum():
    # p_D = 1 tested against q = 1 gives sigma_p/h_e * area summed over
    # the Dirichlet faces (the eps_p consistency term vanishes for q = 1
    # only after summation against the constant: grad q = 0)
    geom = MeshGeometry(unit_mesh(2))
    rhs = assemble_rhs_flow(
        geom, DISC, 1.0, 0.0,
        source=lambda p, t: np.zeros(p.shape[0]),
        p_dirichlet=lambda p, t: np.ones(p.shape[0]),
        g_neumann=None,
    )
    ones = DGScalarField.constant(geom.mesh, 1.0).dofs()
    fd = geom.faces_pressure_dirichlet
    want = np.sum(DISC.sigma_p / geom.h_e[fd] * geom.areas[fd])
    assert ones @ rhs == pytest.approx(want, rel=1e-12)


def test_rhs_flow_missing_data_raises():
    mesh = unit_mesh(1, pressure="neumann")
    geom = MeshGeometry(mesh)
    with pytest.raises(AssemblyError):
        assemble_rhs_flow(
            geom, DISC, 1.0, 0.0,
            source=lambda p, t: np.zeros(p.shape[0]),
            p_dirichlet=None,
            g_neumann=None,
        )


def test_rhs_elasticity_zero_data():
    geom = MeshGeometry(unit_mesh(2))
    rhs = assemble_rhs_elasticity(
        geom, DISC, ELASTIC, 0.0,
        source=lambda p, t: np.zeros((p.shape[0], 3)),
        u_dirichlet=lambda p, t: np.zeros((p.shape[0], 3)),
        traction=None,
    )
    assert np.max(np.abs(rhs)) == 0.0


def test_rhs_elasticity_traction_top_face():
    # traction (0, -r, 0) on the top plane y = 1 against v = e_y gives
    # -r times the top area
    mesh = build_structured_tet_mesh(2, 2, 2, UNIT_BOX)
    tol = 1e-9

    def disp_rule(c):
        return "dirichlet" if c[1] < tol else "neumann"

    tag_boundary(mesh, lambda c: "dirichlet", disp_rule)
    geom = MeshGeometry(mesh)
    r = 50000.0

    def traction(p, t):
        g = np.zeros((p.shape[0], 3))
        top = np.abs(p[:, 1] - 1.0) < 1e-12
        g[top, 1] = -r
        return g

    rhs = assemble_rhs_elasticity(
        geom, DISC, ELASTIC, 0.0,
        source=lambda p, t: np.zeros((p.shape[0], 3)),
        u_dirichlet=lambda p, t: np.zeros((p.shape[0], 3)),
        traction=traction,
    )
    ey = DGVectorField.constant(geom.mesh, [0.0, 1.0, 0.0]).dofs()
    assert ey @ rhs == pytest.approx(-r * 1.0, rel=1e-12)


def test_vector_mass_block_structure():
    geom = MeshGeometry(unit_mesh(1))
    Mv = assemble_vector_mass(geom)
    M = assemble_weighted_mass(1.0, geom)
    n = geom.ndof_scalar
    for c in range(3):
        block = Mv[c * n : (c + 1) * n, c * n : (c + 1) * n]
        assert np.max(np.abs((block - M).data if (block - M).nnz else [0.0])) < 1e-15
