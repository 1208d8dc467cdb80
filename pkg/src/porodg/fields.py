"""Discontinuous P1 fields: projection, point evaluation, norms and errors.

A scalar field stores one coefficient per element vertex in the element-local
Lagrange basis, shape (n_elem, 4); a vector field stacks three components.
Flat dof vectors are element-major for scalars and component-major blocks for
vectors, matching the assembled systems.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SamplingError
from .quadrature import p1_values, tet_rule


@dataclass
class DGScalarField:
    mesh: object
    coefs: np.ndarray  # (nE, 4)

    def __post_init__(self):
        self.coefs = np.asarray(self.coefs, dtype=float)
        if self.coefs.shape != (self.mesh.num_elements, 4):
            raise ValueError(
                f"coefficient array shape {self.coefs.shape} does not match mesh "
                f"({self.mesh.num_elements} elements)"
            )

    def dofs(self):
        return self.coefs.reshape(-1)

    @classmethod
    def from_dofs(cls, mesh, vec):
        return cls(mesh, np.asarray(vec, dtype=float).reshape(mesh.num_elements, 4))

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full((mesh.num_elements, 4), float(value)))

    def copy(self):
        return DGScalarField(self.mesh, self.coefs.copy())


@dataclass
class DGVectorField:
    mesh: object
    coefs: np.ndarray  # (3, nE, 4)

    def __post_init__(self):
        self.coefs = np.asarray(self.coefs, dtype=float)
        if self.coefs.shape != (3, self.mesh.num_elements, 4):
            raise ValueError(f"vector coefficient array has shape {self.coefs.shape}")

    def component(self, c):
        return DGScalarField(self.mesh, self.coefs[c])

    def dofs(self):
        return self.coefs.reshape(-1)

    @classmethod
    def from_dofs(cls, mesh, vec):
        return cls(mesh, np.asarray(vec, dtype=float).reshape(3, mesh.num_elements, 4))

    @classmethod
    def constant(cls, mesh, value):
        value = np.asarray(value, dtype=float)
        coefs = np.tile(value[:, None, None], (1, mesh.num_elements, 4))
        return cls(mesh, coefs)

    def copy(self):
        return DGVectorField(self.mesh, self.coefs.copy())


# ----------------------------------------------------------------------
# projection


def l2_project(f, geom):
    """Element-wise L2 projection of a spatial function onto the P1 space.

    `f` maps points (n, 3) to values (n,); the residual (P_h f - f, q_h) is
    zero for every discrete test function, enforced through the local 4x4
    mass matrices.
    """
    vals = np.asarray(f(geom.vol_qp.reshape(-1, 3)), dtype=float).reshape(
        geom.n_elem, -1
    )
    mass = np.einsum("eq,qi,qj->eij", geom.vol_qw, geom.basis_vol, geom.basis_vol)
    rhs = np.einsum("eq,eq,qi->ei", geom.vol_qw, vals, geom.basis_vol)
    coefs = np.linalg.solve(mass, rhs[:, :, None])[:, :, 0]
    return DGScalarField(geom.mesh, coefs)


def l2_project_vector(f, geom):
    """Component-wise L2 projection of a vector-valued function (n,3)->(n,3)."""
    vals = np.asarray(f(geom.vol_qp.reshape(-1, 3)), dtype=float).reshape(
        geom.n_elem, -1, 3
    )
    mass = np.einsum("eq,qi,qj->eij", geom.vol_qw, geom.basis_vol, geom.basis_vol)
    coefs = np.empty((3, geom.n_elem, 4))
    for c in range(3):
        rhs = np.einsum("eq,eq,qi->ei", geom.vol_qw, vals[:, :, c], geom.basis_vol)
        coefs[c] = np.linalg.solve(mass, rhs[:, :, None])[:, :, 0]
    return DGVectorField(geom.mesh, coefs)


# ----------------------------------------------------------------------
# point evaluation


def locate_points(mesh, points, tol=1e-9):
    """Element containing each point of a structured mesh.

    Points on element interfaces resolve to the lowest containing element id.
    Raises SamplingError for points outside the mesh.
    """
    if mesh.grid_shape is None or mesh.box is None:
        raise SamplingError("point location requires a structured mesh")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.array([b[0] for b in mesh.box])
    hi = np.array([b[1] for b in mesh.box])
    n = np.array(mesh.grid_shape)
    extent = hi - lo
    if np.any(pts < lo - tol * extent) or np.any(pts > hi + tol * extent):
        raise SamplingError("sample point outside the mesh box")
    cell_size = extent / n
    frac = (pts - lo) / cell_size
    base = np.clip(np.floor(frac).astype(int), 0, n - 1)

    coords = mesh.elem_coords
    B = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)
    Binv = np.linalg.inv(B)
    v0 = coords[:, 0, :]

    best = np.full(pts.shape[0], -1, dtype=np.int64)
    # visit the base cell and, for points within tolerance of a cell plane,
    # the lower neighbours too, keeping the lowest containing element id
    near_lower = np.abs(frac - np.round(frac)) <= tol * 10
    for dx in (0, -1):
        for dy in (0, -1):
            for dz in (0, -1):
                shift = np.array([dx, dy, dz])
                if np.any(shift != 0):
                    mask = np.all((near_lower | (shift == 0)), axis=1)
                else:
                    mask = np.ones(pts.shape[0], dtype=bool)
                cells = np.clip(base + shift, 0, n - 1)
                cube = cells[:, 0] + n[0] * (cells[:, 1] + n[1] * cells[:, 2])
                for p in range(6):
                    elem = 6 * cube + p
                    local = np.einsum(
                        "pjd,pd->pj", Binv[elem], pts - v0[elem]
                    )
                    bary = np.concatenate(
                        [1.0 - local.sum(axis=1, keepdims=True), local], axis=1
                    )
                    inside = mask & (bary.min(axis=1) >= -1e-9)
                    take = inside & ((best < 0) | (elem < best))
                    best[take] = elem[take]
    if np.any(best < 0):
        bad = pts[best < 0][0]
        raise SamplingError(f"could not locate point {bad} in any element")
    return best


def evaluate_scalar(field, points, elems=None):
    """Values of a DGScalarField at arbitrary points (lowest-element side rule)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if elems is None:
        elems = locate_points(field.mesh, pts)
    coords = field.mesh.elem_coords[elems]
    B = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)
    local = np.einsum("pjd,pd->pj", np.linalg.inv(B), pts - coords[:, 0, :])
    basis = p1_values(local)
    return np.einsum("pi,pi->p", field.coefs[elems], basis)


# ----------------------------------------------------------------------
# norms


def l2_norm(field, geom):
    vals = geom.field_volume_values(field.coefs)
    return float(np.sqrt(np.einsum("eq,eq->", geom.vol_qw, vals**2)))


def broken_grad_norm(field, geom):
    g = geom.field_volume_gradients(field.coefs)
    return float(np.sqrt(np.sum(geom.volumes * np.einsum("ed,ed->e", g, g))))


def _jump_sq_integral(coefs, geom, faces):
    side0 = geom.field_face_values(coefs, 0)
    side1 = geom.field_face_values(coefs, 1)
    jump = side0 - side1
    jump[geom.is_boundary_face] = side0[geom.is_boundary_face]
    return np.einsum("fq,fq->f", geom.face_qw[faces], jump[faces] ** 2)


def dg_norm(field, geom, which="pressure"):
    """Broken H1 norm plus 1/h_e-weighted jump terms on interior and
    Dirichlet faces of the given family ("pressure" or "displacement")."""
    faces = geom.form_faces(which)
    if isinstance(field, DGVectorField):
        grad_part = sum(broken_grad_norm(field.component(c), geom) ** 2 for c in range(3))
        jump_part = sum(
            np.sum(_jump_sq_integral(field.coefs[c], geom, faces) / geom.h_e[faces])
            for c in range(3)
        )
    else:
        grad_part = broken_grad_norm(field, geom) ** 2
        jump_part = np.sum(_jump_sq_integral(field.coefs, geom, faces) / geom.h_e[faces])
    return float(np.sqrt(grad_part + jump_part))


# ----------------------------------------------------------------------
# errors against closed-form solutions (elevated quadrature)


def _error_quadrature(mesh, degree):
    coords = mesh.elem_coords
    B = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)
    ref_pts, ref_w = tet_rule(degree)
    qp = coords[:, None, 0, :] + np.einsum("edj,qj->eqd", B, ref_pts)
    qw = np.abs(np.linalg.det(B))[:, None] * ref_w[None, :]
    basis = p1_values(ref_pts)
    return qp, qw, basis


def l2_error(field, exact, degree=6):
    """L2 distance between a discrete field and a closed-form function.

    For vector fields `exact` must return (n, 3) arrays; components are
    summed in quadrature.
    """
    mesh = field.mesh
    qp, qw, basis = _error_quadrature(mesh, degree)
    flat = qp.reshape(-1, 3)
    if isinstance(field, DGVectorField):
        ex = np.asarray(exact(flat), dtype=float).reshape(qp.shape[0], -1, 3)
        err = 0.0
        for c in range(3):
            vals = np.einsum("ei,qi->eq", field.coefs[c], basis)
            err += np.einsum("eq,eq->", qw, (ex[:, :, c] - vals) ** 2)
    else:
        ex = np.asarray(exact(flat), dtype=float).reshape(qp.shape[:2])
        vals = np.einsum("ei,qi->eq", field.coefs, basis)
        err = np.einsum("eq,eq->", qw, (ex - vals) ** 2)
    return float(np.sqrt(err))


def broken_grad_error(field, exact_grad, degree=6):
    """Broken gradient-norm distance to a closed-form gradient (n,3)->(n,3)."""
    mesh = field.mesh
    qp, qw, _ = _error_quadrature(mesh, degree)
    coords = mesh.elem_coords
    B = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)
    from .quadrature import P1_REF_GRADS

    grads = np.einsum("ejd,ij->eid", np.linalg.inv(B), P1_REF_GRADS)
    ex = np.asarray(exact_grad(qp.reshape(-1, 3)), dtype=float).reshape(
        qp.shape[0], qp.shape[1], 3
    )
    g = np.einsum("ei,eid->ed", field.coefs, grads)
    diff = ex - g[:, None, :]
    return float(np.sqrt(np.einsum("eq,eqd,eqd->", qw, diff, diff)))
