"""Assembly of the interior-penalty DG forms and right-hand sides.

Conventions (shared with the geometry cache):

* jump [q] = q|side0 - q|side1, average {q} = (q|side0 + q|side1)/2 across
  interior faces; both equal the trace on boundary faces,
* the diffusion form integrates faces over interior + pressure-Dirichlet
  faces, the elasticity form over interior + displacement-Dirichlet faces,
  the displacement-divergence coupling form over interior + all boundary
  faces, and the pressure-gradient coupling form over interior faces only,
* scalar dofs are element-major (4 per element), vector dofs are
  component-major blocks of the scalar layout.

All routines are free of Python loops over elements or faces; serial
assembly of identical inputs is bit-for-bit reproducible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coefficients import CoefficientField
from .errors import AssemblyError


@dataclass(frozen=True)
class DiscretizationParams:
    """Penalties, symmetrization signs, stabilization and quadrature orders."""

    sigma_p: float
    sigma_u: float
    eps_p: int = -1
    eps_u: int = -1
    gamma: float = 0.0
    quad_volume_order: int = 4
    quad_face_order: int = 4

    def __post_init__(self):
        if self.eps_p not in (-1, 1) or self.eps_u not in (-1, 1):
            raise ValueError("symmetrization parameters must be -1 or +1")
        if self.sigma_p <= 0.0 or self.sigma_u <= 0.0:
            raise ValueError("penalty parameters must be positive")
        if self.gamma < 0.0:
            raise ValueError("stabilization constant must be >= 0")


def _scatter(data, rows, cols, shape):
    """Accumulate triplets into CSR, dropping padded (-1) positions."""
    rows = rows.reshape(-1)
    cols = cols.reshape(-1)
    data = data.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix(
        (data[keep], (rows[keep], cols[keep])), shape=shape
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _block_indices(dofs_test, dofs_trial):
    rows = np.repeat(dofs_test, dofs_trial.shape[-1], axis=-1).reshape(
        dofs_test.shape[0], dofs_test.shape[-1], dofs_trial.shape[-1]
    )
    cols = np.repeat(dofs_trial[:, None, :], dofs_test.shape[-1], axis=1)
    return rows, cols


def _face_dofs8(geom, faces):
    return geom.face_dofs[faces].reshape(len(faces), 8)


def _vector_face_dofs(geom, faces):
    """Vector dofs per face side/component, shape (k, 2, 3, 4), -1 padded."""
    fd = geom.face_dofs[faces]  # (k, 2, 4)
    comp = np.arange(3)[None, None, :, None] * geom.ndof_scalar
    out = fd[:, :, None, :] + comp
    out[fd[:, :, None, :].repeat(3, axis=2) < 0] = -1
    return out


# ----------------------------------------------------------------------
# bilinear forms


def assemble_diffusion(chi, geom, disc, which="pressure"):
    """Interior-penalty matrix for -div(chi grad p).

    Face sums run over interior faces plus the Dirichlet faces of the given
    boundary family, with penalty sigma_p/h_e, the consistency term
    -({chi grad p}.n, [q]) and the eps_p-signed symmetrization term.
    """
    chi = CoefficientField.wrap(chi)
    nd = geom.ndof_scalar
    chiv = chi.volume_values(geom)
    if np.any(chiv <= 0.0):
        raise AssemblyError("non-positive diffusion coefficient at a volume point")
    int_chi = np.einsum("eq,eq->e", geom.vol_qw, chiv)
    vol = int_chi[:, None, None] * np.einsum("eid,ejd->eij", geom.grads, geom.grads)
    rows, cols = _block_indices(geom.elem_dofs, geom.elem_dofs)
    parts = [(vol, rows, cols)]

    faces = geom.form_faces(which)
    if len(faces):
        chif = np.stack(
            [chi.face_values(geom, 0)[faces], chi.face_values(geom, 1)[faces]], axis=1
        )  # (k, 2, nqf)
        if np.any(chif <= 0.0):
            raise AssemblyError("non-positive diffusion coefficient at a face point")
        qw = geom.face_qw[faces]
        k, nqf = qw.shape
        basis = geom.face_basis[faces]  # (k, 2, nqf, 4)
        jump = (geom.jump_sign[None, :, None, None] * basis).transpose(0, 2, 1, 3)
        jump = jump.reshape(k, nqf, 8)
        gn = geom.face_gn[faces]  # (k, 2, 4)
        avg = geom.avg_w[faces]  # (k, 2)
        flux = (
            avg[:, :, None, None] * chif[:, :, :, None] * gn[:, :, None, :]
        ).transpose(0, 2, 1, 3).reshape(k, nqf, 8)

        pen = (disc.sigma_p / geom.h_e[faces])[:, None, None] * np.einsum(
            "kq,kqa,kqb->kab", qw, jump, jump
        )
        cons = -np.einsum("kq,kqa,kqb->kab", qw, jump, flux)
        symm = disc.eps_p * np.einsum("kq,kqa,kqb->kab", qw, flux, jump)
        dofs8 = _face_dofs8(geom, faces)
        frows, fcols = _block_indices(dofs8, dofs8)
        parts.append((pen + cons + symm, frows, fcols))

    data = np.concatenate([p[0].reshape(-1) for p in parts])
    r = np.concatenate([p[1].reshape(-1) for p in parts])
    c = np.concatenate([p[2].reshape(-1) for p in parts])
    return _scatter(data, r, c, (nd, nd))


def assemble_elasticity(geom, params, disc):
    """Matrix for -mu lap(u) - (lam+mu) grad(div u) with IP face terms.

    The mu-block acts component-wise (penalty mu sigma_u/h_e, consistency and
    eps_u symmetrization of {grad u} n).  The (lam+mu) divergence block
    couples components in the volume and carries the full interior-penalty
    treatment of the grad-div operator: consistency -(lam+mu)({div u},[v.n]),
    its eps_u-signed symmetrization, and the normal-jump penalty
    (lam+mu) sigma_u/h_e ([u.n],[v.n]).  Dropping the last two keeps the
    scheme consistent but loses adjoint consistency and, at coarse meshes,
    stability of the divergence coupling; both are needed for second-order
    displacement convergence in L2.
    """
    mu = params.mu
    lm = params.lam + params.mu
    nd = geom.ndof_vector
    ndscalar = geom.ndof_scalar

    # volume: mu (grad u, grad v) per component + (lam+mu)(div u, div v)
    stiff = geom.volumes[:, None, None] * np.einsum(
        "eid,ejd->eij", geom.grads, geom.grads
    )
    div = geom.volumes[:, None, None, None, None] * np.einsum(
        "eid,ejc->eidjc", geom.grads, geom.grads
    )  # (nE, 4, 3, 4, 3): (test i,d ; trial j,c)

    parts_data, parts_rows, parts_cols = [], [], []
    for c in range(3):
        dofs = geom.vector_dof(c, geom.elem_dofs)
        rows, cols = _block_indices(dofs, dofs)
        parts_data.append((mu * stiff).reshape(-1))
        parts_rows.append(rows.reshape(-1))
        parts_cols.append(cols.reshape(-1))
    vdofs = np.stack(
        [geom.vector_dof(c, geom.elem_dofs) for c in range(3)], axis=2
    )  # (nE, 4, 3)
    dv = vdofs.reshape(geom.n_elem, 12)
    rows, cols = _block_indices(dv, dv)
    parts_data.append((lm * div.reshape(geom.n_elem, 12, 12)).reshape(-1))
    parts_rows.append(rows.reshape(-1))
    parts_cols.append(cols.reshape(-1))

    faces = geom.form_faces("displacement")
    if len(faces):
        qw = geom.face_qw[faces]
        k, nqf = qw.shape
        basis = geom.face_basis[faces]
        gn = geom.face_gn[faces]
        avg = geom.avg_w[faces]
        n = geom.normals[faces]
        h = geom.h_e[faces]
        jump = (geom.jump_sign[None, :, None, None] * basis).transpose(0, 2, 1, 3)
        jump = jump.reshape(k, nqf, 8)
        flux = (avg[:, :, None] * gn).reshape(k, 8)  # {grad phi} . n, constant in q

        pen = (mu * disc.sigma_u / h)[:, None, None] * np.einsum(
            "kq,kqa,kqb->kab", qw, jump, jump
        )
        wj = np.einsum("kq,kqa->ka", qw, jump)
        cons = -mu * np.einsum("ka,kb->kab", wj, flux)
        symm = disc.eps_u * mu * np.einsum("ka,kb->kab", flux, wj)
        dofs8 = _face_dofs8(geom, faces)
        for c in range(3):
            cd = np.where(dofs8 < 0, -1, c * ndscalar + dofs8)
            frows, fcols = _block_indices(cd, cd)
            parts_data.append((pen + cons + symm).reshape(-1))
            parts_rows.append(frows.reshape(-1))
            parts_cols.append(fcols.reshape(-1))

        # -(lam+mu) ({div u}, [v . n]) + eps_u (lam+mu) ({div v}, [u . n])
        fgrads = geom.face_grads[faces]  # (k, 2, 4, 3)
        avgdiv = (avg[:, :, None, None] * fgrads).transpose(0, 1, 3, 2).reshape(k, 24)
        # trial layout (s, c, j); test term [v.n]: (s, d, i)
        vn = np.einsum(
            "s,ksqi,kd->kqsdi",
            geom.jump_sign,
            basis,
            n,
        ).reshape(k, nqf, 24)
        wvn = np.einsum("kq,kqa->ka", qw, vn)
        blk = -lm * np.einsum("ka,kb->kab", wvn, avgdiv)
        blk += disc.eps_u * lm * np.einsum("ka,kb->kab", avgdiv, wvn)
        blk += (lm * disc.sigma_u / h)[:, None, None] * np.einsum(
            "kq,kqa,kqb->kab", qw, vn, vn
        )
        vfd = _vector_face_dofs(geom, faces)  # (k, 2, 3, 4)
        d24 = vfd.reshape(k, 24)
        frows, fcols = _block_indices(d24, d24)
        parts_data.append(blk.reshape(-1))
        parts_rows.append(frows.reshape(-1))
        parts_cols.append(fcols.reshape(-1))

    return _scatter(
        np.concatenate(parts_data),
        np.concatenate(parts_rows),
        np.concatenate(parts_cols),
        (nd, nd),
    )


def assemble_bu(chi, geom):
    """Coupling matrix of the chi div(u) operator: rows scalar, cols vector.

    Implements -sum_E (u, grad(chi q))_E + sum over all faces of
    ({u.n_e}, [chi q])_e; grad(chi q) expands as chi grad q + q grad chi at
    the volume quadrature points (chain rule through the coefficient).
    """
    chi = CoefficientField.wrap(chi)
    chiv = chi.volume_values(geom)
    dchiv = chi.volume_gradients(geom)
    nE = geom.n_elem

    # -(phi_j^{u_c}, chi d_c phi_i + phi_i d_c chi)
    t1 = -np.einsum("eq,qj,eq,eic->eicj", geom.vol_qw, geom.basis_vol, chiv, geom.grads)
    t2 = -np.einsum(
        "eq,qj,qi,eqc->eicj", geom.vol_qw, geom.basis_vol, geom.basis_vol, dchiv
    )
    vol = (t1 + t2).reshape(nE, 4, 12)  # rows i, cols (c, j)
    vcols = np.stack(
        [geom.vector_dof(c, geom.elem_dofs) for c in range(3)], axis=1
    ).reshape(nE, 12)
    rows = np.repeat(geom.elem_dofs[:, :, None], 12, axis=2)
    cols = np.repeat(vcols[:, None, :], 4, axis=1)
    parts = [(vol, rows, cols)]

    faces = np.arange(geom.face_qw.shape[0])
    qw = geom.face_qw
    k, nqf = qw.shape
    basis = geom.face_basis
    avg = geom.avg_w
    n = geom.normals
    chif = np.stack([chi.face_values(geom, 0), chi.face_values(geom, 1)], axis=1)
    # {u . n}: (s, c, j) trial; [chi q]: (s, i) test
    un = np.einsum("ks,ksqj,kc->kqscj", avg, basis, n).reshape(k, nqf, 24)
    jchi = np.einsum("s,ksq,ksqi->kqsi", geom.jump_sign, chif, basis).reshape(
        k, nqf, 8
    )
    blk = np.einsum("kq,kqa,kqb->kab", qw, jchi, un)
    dofs8 = _face_dofs8(geom, faces)
    vfd = _vector_face_dofs(geom, faces).reshape(k, 24)
    frows = np.repeat(dofs8[:, :, None], 24, axis=2)
    fcols = np.repeat(vfd[:, None, :], 8, axis=1)
    parts.append((blk, frows, fcols))

    data = np.concatenate([p[0].reshape(-1) for p in parts])
    r = np.concatenate([p[1].reshape(-1) for p in parts])
    c = np.concatenate([p[2].reshape(-1) for p in parts])
    return _scatter(data, r, c, (geom.ndof_scalar, geom.ndof_vector))


def assemble_bp(geom):
    """Coupling matrix of the grad(q) operator: rows vector, cols scalar.

    Implements sum_E (grad q, v)_E - sum over interior faces of
    ([q], {v.n_e})_e, exactly as displayed (no boundary contribution).
    """
    nE = geom.n_elem
    iv = np.einsum("eq,qi->ei", geom.vol_qw, geom.basis_vol)  # int phi_i
    vol = np.einsum("ei,ejd->edij", iv, geom.grads).reshape(nE, 12, 4)
    vrows = np.stack(
        [geom.vector_dof(c, geom.elem_dofs) for c in range(3)], axis=1
    ).reshape(nE, 12)
    rows = np.repeat(vrows[:, :, None], 4, axis=2)
    cols = np.repeat(geom.elem_dofs[:, None, :], 12, axis=1)
    parts = [(vol, rows, cols)]

    faces = geom.faces_interior
    if len(faces):
        qw = geom.face_qw[faces]
        k, nqf = qw.shape
        basis = geom.face_basis[faces]
        avg = geom.avg_w[faces]
        n = geom.normals[faces]
        jq = np.einsum("s,ksqj->kqsj", geom.jump_sign, basis).reshape(k, nqf, 8)
        vn = np.einsum("ks,ksqi,kd->kqsdi", avg, basis, n).reshape(k, nqf, 24)
        blk = -np.einsum("kq,kqa,kqb->kab", qw, vn, jq)
        dofs8 = _face_dofs8(geom, faces)
        vfd = _vector_face_dofs(geom, faces).reshape(k, 24)
        frows = np.repeat(vfd[:, :, None], 8, axis=2)
        fcols = np.repeat(dofs8[:, None, :], 24, axis=1)
        parts.append((blk, frows, fcols))

    data = np.concatenate([p[0].reshape(-1) for p in parts])
    r = np.concatenate([p[1].reshape(-1) for p in parts])
    c = np.concatenate([p[2].reshape(-1) for p in parts])
    return _scatter(data, r, c, (geom.ndof_vector, geom.ndof_scalar))


def assemble_weighted_mass(w, geom):
    """Mass matrix (w phi_j, phi_i) with a pointwise weight of either sign."""
    w = CoefficientField.wrap(w)
    wv = w.volume_values(geom)
    loc = np.einsum("eq,eq,qi,qj->eij", geom.vol_qw, wv, geom.basis_vol, geom.basis_vol)
    rows, cols = _block_indices(geom.elem_dofs, geom.elem_dofs)
    return _scatter(loc, rows, cols, (geom.ndof_scalar, geom.ndof_scalar))


def assemble_vector_mass(geom):
    """Unweighted mass matrix on the vector space (block diagonal)."""
    m = assemble_weighted_mass(1.0, geom)
    return sp.block_diag([m, m, m], format="csr")


# ----------------------------------------------------------------------
# right-hand sides


def _eval_on_faces(data, geom, faces, t):
    pts = geom.face_qp[faces].reshape(-1, 3)
    return np.asarray(data(pts, t), dtype=float)


def assemble_rhs_flow(geom, disc, chi, t, source, p_dirichlet, g_neumann):
    """Load vector for one phase: source, Dirichlet consistency with the
    mobility-permeability coefficient, Neumann flux, and Dirichlet penalty.

    `source`, `p_dirichlet` and `g_neumann` map (points, t) to values; the
    latter two must be supplied whenever correspondingly tagged faces exist.
    """
    chi = CoefficientField.wrap(chi)
    vec = np.zeros(geom.ndof_scalar)
    fv = np.asarray(source(geom.vol_qp.reshape(-1, 3), t), dtype=float).reshape(
        geom.vol_qw.shape
    )
    np.add.at(
        vec,
        geom.elem_dofs,
        np.einsum("eq,eq,qi->ei", geom.vol_qw, fv, geom.basis_vol),
    )

    fd = geom.faces_pressure_dirichlet
    if len(fd):
        if p_dirichlet is None:
            raise AssemblyError("pressure Dirichlet faces present but no boundary data")
        pD = _eval_on_faces(p_dirichlet, geom, fd, t).reshape(len(fd), -1)
        qw = geom.face_qw[fd]
        chi0 = chi.face_values(geom, 0)[fd]
        basis0 = geom.face_basis[fd][:, 0]  # (k, nqf, 4)
        gn0 = geom.face_gn[fd][:, 0]  # (k, 4)
        cons = disc.eps_p * np.einsum("kq,kq,ki->ki", qw, chi0 * pD, gn0)
        pen = (disc.sigma_p / geom.h_e[fd])[:, None] * np.einsum(
            "kq,kq,kqi->ki", qw, pD, basis0
        )
        np.add.at(vec, geom.face_dofs[fd][:, 0], cons + pen)

    fn = geom.faces_pressure_neumann
    if len(fn):
        if g_neumann is None:
            raise AssemblyError("pressure Neumann faces present but no flux data")
        g = _eval_on_faces(g_neumann, geom, fn, t).reshape(len(fn), -1)
        flux = np.einsum("kq,kq,kqi->ki", geom.face_qw[fn], g, geom.face_basis[fn][:, 0])
        np.add.at(vec, geom.face_dofs[fn][:, 0], flux)
    return vec


def assemble_rhs_elasticity(geom, disc, params, t, source, u_dirichlet, traction):
    """Load vector for the momentum equation.

    The Dirichlet penalty carries the same mu sigma_u/h_e weight as the
    bilinear form so that boundary data enters consistently; `source`,
    `u_dirichlet` and `traction` map (points, t) to (n, 3) values.
    """
    vec = np.zeros(geom.ndof_vector)
    fv = np.asarray(source(geom.vol_qp.reshape(-1, 3), t), dtype=float).reshape(
        geom.vol_qw.shape + (3,)
    )
    for c in range(3):
        np.add.at(
            vec,
            geom.vector_dof(c, geom.elem_dofs),
            np.einsum("eq,eq,qi->ei", geom.vol_qw, fv[:, :, c], geom.basis_vol),
        )

    fd = geom.faces_disp_dirichlet
    if len(fd):
        if u_dirichlet is None:
            raise AssemblyError("displacement Dirichlet faces present but no data")
        uD = _eval_on_faces(u_dirichlet, geom, fd, t).reshape(len(fd), -1, 3)
        qw = geom.face_qw[fd]
        basis0 = geom.face_basis[fd][:, 0]
        gn0 = geom.face_gn[fd][:, 0]
        grads0 = geom.face_grads[fd][:, 0]  # (k, 4, 3)
        sd = geom.face_dofs[fd][:, 0]
        # data counterparts of the divergence symmetrization and penalty
        n = geom.normals[fd]
        udn = np.einsum("kq,kqd,kd->k", qw, uD, n)
        udn_q = np.einsum("kqd,kd->kq", uD, n)
        lm = params.lam + params.mu
        for c in range(3):
            cons = disc.eps_u * params.mu * np.einsum("kq,kq,ki->ki", qw, uD[:, :, c], gn0)
            cons += disc.eps_u * lm * udn[:, None] * grads0[:, :, c]
            pen = (params.mu * disc.sigma_u / geom.h_e[fd])[:, None] * np.einsum(
                "kq,kq,kqi->ki", qw, uD[:, :, c], basis0
            )
            pen += (lm * disc.sigma_u / geom.h_e[fd])[:, None] * np.einsum(
                "kq,kq,kqi,k->ki", qw, udn_q, basis0, n[:, c]
            )
            np.add.at(vec, c * geom.ndof_scalar + sd, cons + pen)

    fn = geom.faces_disp_neumann
    if len(fn):
        if traction is None:
            raise AssemblyError("displacement Neumann faces present but no traction data")
        g = _eval_on_faces(traction, geom, fn, t).reshape(len(fn), -1, 3)
        sd = geom.face_dofs[fn][:, 0]
        for c in range(3):
            load = np.einsum(
                "kq,kq,kqi->ki", geom.face_qw[fn], g[:, :, c], geom.face_basis[fn][:, 0]
            )
            np.add.at(vec, c * geom.ndof_scalar + sd, load)
    return vec


def assemble_bp_rhs(expr, geom):
    """Vector of the grad(q) coupling form applied to a pointwise scalar.

    `expr` is any object with `volume_values(geom)`, `volume_gradients(geom)`
    and `face_values(geom, side)` (e.g. a CoefficientField); this evaluates
    the composite argument at quadrature points instead of interpolating it,
    preserving the form as written for nonlinear pressure combinations.
    """
    vec = np.zeros(geom.ndof_vector)
    gradv = expr.volume_gradients(geom)  # (nE, nq, 3)
    for c in range(3):
        loc = np.einsum("eq,eq,qi->ei", geom.vol_qw, gradv[:, :, c], geom.basis_vol)
        np.add.at(vec, geom.vector_dof(c, geom.elem_dofs), loc)

    faces = geom.faces_interior
    if len(faces):
        v0 = expr.face_values(geom, 0)[faces]
        v1 = expr.face_values(geom, 1)[faces]
        jump = v0 - v1
        qw = geom.face_qw[faces]
        basis = geom.face_basis[faces]
        avg = geom.avg_w[faces]
        n = geom.normals[faces]
        for s in range(2):
            loc = -np.einsum(
                "kq,kq,k,kqi,kd->kid", qw, jump, avg[:, s], basis[:, s], n
            )
            dofs = geom.face_dofs[faces][:, s]
            for c in range(3):
                np.add.at(vec, c * geom.ndof_scalar + dofs, loc[:, :, c])
    return vec
