"""Precomputed per-mesh arrays used by the vectorized assembly routines.

The geometry object is built once per (mesh, quadrature order) pair and is
immutable afterwards; every form assembly is then a handful of einsums over
these arrays, with no Python loop over elements or faces.

Face side conventions
---------------------
Side 0 is the lower-id adjacent element ("E1"), side 1 the other one.  On
boundary faces side 1 is padding: `face_basis`/`face_gn` are zeroed there and
`face_dofs` holds -1 (filtered at scatter time), so jumps and averages reduce
to the trace.  Coefficient fields are evaluated with `face_field_*` arrays
whose padded side mirrors side 0, so a two-sided coefficient equals its trace
on the boundary.
"""

import numpy as np

from .errors import AssemblyError
from .mesh import FaceTag
from .quadrature import P1_REF_GRADS, p1_values, tet_rule, triangle_rule


class MeshGeometry:
    """Quadrature points, basis traces and dof maps for one mesh."""

    def __init__(self, mesh, quad_volume_order=4, quad_face_order=4):
        self.mesh = mesh
        self.quad_volume_order = quad_volume_order
        self.quad_face_order = quad_face_order

        coords = mesh.elem_coords  # (nE, 4, 3)
        n_elem = coords.shape[0]
        self.n_elem = n_elem
        self.ndof_scalar = 4 * n_elem
        self.ndof_vector = 12 * n_elem

        # affine map x = v0 + B xhat, columns of B are edge vectors
        B = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)
        detB = np.linalg.det(B)
        if np.any(np.abs(detB) < 1e-300):
            raise AssemblyError("degenerate tetrahedron with zero volume")
        Binv = np.linalg.inv(B)
        self.volumes = np.abs(detB) / 6.0
        self.grads = np.einsum("ejd,ij->eid", Binv, P1_REF_GRADS)  # (nE, 4, 3)
        self._Binv = Binv
        self._v0 = coords[:, 0, :]

        ref_pts, ref_w = tet_rule(quad_volume_order)
        self.vol_qp = self._v0[:, None, :] + np.einsum("edj,qj->eqd", B, ref_pts)
        self.vol_qw = np.abs(detB)[:, None] * ref_w[None, :]  # (nE, nq)
        self.basis_vol = p1_values(ref_pts)  # (nq, 4)

        self.elem_dofs = 4 * np.arange(n_elem)[:, None] + np.arange(4)[None, :]

        self._build_faces()

    # ------------------------------------------------------------------
    def _build_faces(self):
        mesh = self.mesh
        fe = mesh.face_elems
        nf = fe.shape[0]
        boundary = fe[:, 1] < 0
        self.is_boundary_face = boundary
        self.normals = mesh.face_normals
        self.h_e = mesh.face_diameters
        self.areas = mesh.face_areas

        tri_pts, tri_w = triangle_rule(self.quad_face_order)
        fc = mesh.vertices[mesh.face_vertices]  # (nF, 3, 3)
        e1 = fc[:, 1] - fc[:, 0]
        e2 = fc[:, 2] - fc[:, 0]
        self.face_qp = (
            fc[:, None, 0, :]
            + tri_pts[None, :, 0, None] * e1[:, None, :]
            + tri_pts[None, :, 1, None] * e2[:, None, :]
        )  # (nF, nqf, 3)
        self.face_qw = 2.0 * mesh.face_areas[:, None] * tri_w[None, :]

        # elements per side; padded side mirrors side 0 for field evaluation
        side_elems = fe.copy()
        side_elems[boundary, 1] = fe[boundary, 0]
        self.face_field_elems = side_elems

        nqf = tri_pts.shape[0]
        face_basis = np.empty((nf, 2, nqf, 4))
        face_gn = np.empty((nf, 2, 4))
        for s in range(2):
            el = side_elems[:, s]
            local = np.einsum(
                "fjd,fqd->fqj",
                self._Binv[el],
                self.face_qp - self._v0[el][:, None, :],
            )
            face_basis[:, s] = p1_values(local.reshape(-1, 3)).reshape(nf, nqf, 4)
            face_gn[:, s] = np.einsum("fid,fd->fi", self.grads[el], self.normals)
        self.face_field_basis = face_basis.copy()
        # zero the padded side for test/trial traces
        face_basis[boundary, 1] = 0.0
        face_gn[boundary, 1] = 0.0
        self.face_basis = face_basis
        self.face_gn = face_gn
        face_grads = self.grads[side_elems]  # (nF, 2, 4, 3)
        face_grads[boundary, 1] = 0.0
        self.face_grads = face_grads

        self.avg_w = np.full((nf, 2), 0.5)
        self.avg_w[boundary] = (1.0, 0.0)
        self.jump_sign = np.array([1.0, -1.0])

        face_dofs = 4 * fe[:, :, None] + np.arange(4)[None, None, :]
        face_dofs[boundary, 1, :] = -1
        self.face_dofs = face_dofs  # (nF, 2, 4), -1 padding

        self.faces_interior = mesh.interior_faces
        self.faces_pressure_dirichlet = mesh.faces_with_pressure_tag(FaceTag.DIRICHLET)
        self.faces_pressure_neumann = mesh.faces_with_pressure_tag(FaceTag.NEUMANN)
        self.faces_disp_dirichlet = mesh.faces_with_displacement_tag(FaceTag.DIRICHLET)
        self.faces_disp_neumann = mesh.faces_with_displacement_tag(FaceTag.NEUMANN)

    # ------------------------------------------------------------------
    def dirichlet_faces(self, which):
        if which == "pressure":
            return self.faces_pressure_dirichlet
        if which == "displacement":
            return self.faces_disp_dirichlet
        raise ValueError(f"unknown boundary family {which!r}")

    def form_faces(self, which):
        """Interior faces plus the Dirichlet boundary of the given family."""
        return np.concatenate([self.faces_interior, self.dirichlet_faces(which)])

    def vector_dof(self, component, elem_dofs):
        """Map scalar dof ids to the dofs of one displacement component."""
        return component * self.ndof_scalar + elem_dofs

    def field_volume_values(self, coefs):
        """Evaluate a P1 coefficient array (nE, 4) at the volume quadrature points."""
        return np.einsum("ei,qi->eq", coefs, self.basis_vol)

    def field_volume_gradients(self, coefs):
        """Per-element constant gradient of a P1 field, shape (nE, 3)."""
        return np.einsum("ei,eid->ed", coefs, self.grads)

    def field_face_values(self, coefs, side):
        """Evaluate a P1 field at face quadrature points from one side.

        On boundary faces both sides return the trace.
        """
        el = self.face_field_elems[:, side]
        return np.einsum("fi,fqi->fq", coefs[el], self.face_field_basis[:, side])
