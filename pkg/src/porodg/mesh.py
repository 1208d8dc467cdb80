"""Structured tetrahedral meshes of box domains with oriented face topology.

Each grid cell is split into six tetrahedra sharing the cell diagonal (Kuhn
split), which guarantees conforming faces between neighbouring cells.  Faces
store the two adjacent elements with the unit normal pointing from the
lower-id element into the higher-id one (outward on the boundary), plus
independent boundary tags for the pressure and the displacement problems.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from itertools import permutations

import numpy as np

from .errors import ConfigurationError, MeshTopologyError


class FaceTag(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2


# Kuhn split: one tetrahedron per permutation of the axis walk from the low
# cell corner to the high corner.  Fixed lexicographic order keeps element
# numbering deterministic.
_KUHN_PERMS = tuple(permutations((0, 1, 2)))


@dataclass(frozen=True)
class FaceRecord:
    """Single-face view used for inspection and tests; bulk data lives in Mesh arrays."""

    vertices: tuple
    elements: tuple  # (E1, E2) with E2 None on the boundary
    normal: np.ndarray
    area: float
    diameter: float
    pressure_tag: FaceTag
    displacement_tag: FaceTag


@dataclass
class Mesh:
    """Tetrahedral mesh with face topology stored as structure-of-arrays.

    Face side 1 ("E1") is always the lower element id; `face_elems[:, 1]` is
    -1 on boundary faces.  All arrays are read-only after construction.
    """

    vertices: np.ndarray  # (nv, 3)
    tets: np.ndarray  # (nt, 4)
    box: tuple | None = None  # ((x0,x1),(y0,y1),(z0,z1)) for structured meshes
    grid_shape: tuple | None = None  # (nx, ny, nz) for structured meshes

    face_vertices: np.ndarray = field(default=None, repr=False)
    face_elems: np.ndarray = field(default=None, repr=False)
    face_normals: np.ndarray = field(default=None, repr=False)
    face_areas: np.ndarray = field(default=None, repr=False)
    face_diameters: np.ndarray = field(default=None, repr=False)
    face_pressure_tags: np.ndarray = field(default=None, repr=False)
    face_displacement_tags: np.ndarray = field(default=None, repr=False)

    @property
    def num_elements(self):
        return self.tets.shape[0]

    @property
    def num_faces(self):
        return self.face_vertices.shape[0]

    @property
    def elem_coords(self):
        """Vertex coordinates per element, shape (nt, 4, 3)."""
        return self.vertices[self.tets]

    @property
    def elem_volumes(self):
        coords = self.elem_coords
        edges = coords[:, 1:, :] - coords[:, :1, :]
        return np.abs(np.linalg.det(edges)) / 6.0

    @property
    def elem_diameters(self):
        """Longest edge per tetrahedron."""
        coords = self.elem_coords
        pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        d = np.stack(
            [np.linalg.norm(coords[:, a] - coords[:, b], axis=1) for a, b in pairs],
            axis=1,
        )
        return d.max(axis=1)

    @property
    def elem_centroids(self):
        return self.elem_coords.mean(axis=1)

    @property
    def face_centroids(self):
        return self.vertices[self.face_vertices].mean(axis=1)

    @property
    def interior_faces(self):
        return np.flatnonzero(self.face_elems[:, 1] >= 0)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_elems[:, 1] < 0)

    def faces_with_pressure_tag(self, tag):
        return np.flatnonzero(self.face_pressure_tags == tag)

    def faces_with_displacement_tag(self, tag):
        return np.flatnonzero(self.face_displacement_tags == tag)

    def face(self, i):
        """FaceRecord view of face i."""
        e2 = int(self.face_elems[i, 1])
        return FaceRecord(
            vertices=tuple(int(v) for v in self.face_vertices[i]),
            elements=(int(self.face_elems[i, 0]), None if e2 < 0 else e2),
            normal=self.face_normals[i].copy(),
            area=float(self.face_areas[i]),
            diameter=float(self.face_diameters[i]),
            pressure_tag=FaceTag(int(self.face_pressure_tags[i])),
            displacement_tag=FaceTag(int(self.face_displacement_tags[i])),
        )


def build_structured_tet_mesh(nx, ny, nz, box):
    """Mesh an axis-aligned box with 6*nx*ny*nz tetrahedra.

    Parameters
    ----------
    nx, ny, nz : int
        Number of grid cells per axis, all >= 1.
    box : sequence
        ((x0, x1), (y0, y1), (z0, z1)) with positive extent on every axis.

    Returns
    -------
    Mesh with face topology built and all faces tagged INTERIOR/untagged.
    """
    if min(nx, ny, nz) < 1:
        raise ValueError(f"cell counts must be >= 1, got ({nx}, {ny}, {nz})")
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if any(hi <= lo for lo, hi in box):
        raise ValueError(f"box extents must be positive, got {box}")

    xs = np.linspace(box[0][0], box[0][1], nx + 1)
    ys = np.linspace(box[1][0], box[1][1], ny + 1)
    zs = np.linspace(box[2][0], box[2][1], nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    # vertex ordering x-fastest: id = i + (nx+1)*(j + (ny+1)*k)
    vertices = np.stack(
        [X.transpose(2, 1, 0).ravel(), Y.transpose(2, 1, 0).ravel(), Z.transpose(2, 1, 0).ravel()],
        axis=-1,
    )

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I = I.transpose(2, 1, 0).ravel()  # cube ordering x-fastest
    J = J.transpose(2, 1, 0).ravel()
    K = K.transpose(2, 1, 0).ravel()

    steps = np.eye(3, dtype=int)
    tets = np.empty((6 * I.size, 4), dtype=np.int64)
    for p, perm in enumerate(_KUHN_PERMS):
        c = np.stack([I, J, K], axis=-1)
        v0 = c
        v1 = c + steps[perm[0]]
        v2 = v1 + steps[perm[1]]
        v3 = c + 1
        quad = [vid(v[:, 0], v[:, 1], v[:, 2]) for v in (v0, v1, v2, v3)]
        # odd permutations produce negative volume; swap the last two vertices
        even = perm in ((0, 1, 2), (1, 2, 0), (2, 0, 1))
        if not even:
            quad[2], quad[3] = quad[3], quad[2]
        tets[p::6] = np.stack(quad, axis=-1)

    mesh = Mesh(vertices=vertices, tets=tets, box=box, grid_shape=(nx, ny, nz))
    return build_face_topology(mesh)


# local faces of a tet, one opposite each vertex
_LOCAL_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


def build_face_topology(mesh):
    """Populate the face arrays of a mesh from its element list.

    Interior faces store (E1, E2) with E1 the lower element id and the unit
    normal pointing from E1 into E2; boundary faces store (E1, -1) with the
    outward normal.  Faces are numbered in first-encounter order over the
    element loop, which is deterministic.
    """
    tets = mesh.tets
    by_key = {}
    order = []
    for e in range(tets.shape[0]):
        for loc in _LOCAL_FACES:
            tri = (tets[e, loc[0]], tets[e, loc[1]], tets[e, loc[2]])
            key = tuple(sorted(int(v) for v in tri))
            if key in by_key:
                by_key[key].append(e)
                if len(by_key[key]) > 2:
                    raise MeshTopologyError(
                        f"face {key} shared by more than two elements"
                    )
            else:
                by_key[key] = [e]
                order.append(key)

    nf = len(order)
    face_vertices = np.array(order, dtype=np.int64)
    face_elems = np.full((nf, 2), -1, dtype=np.int64)
    for i, key in enumerate(order):
        elems = sorted(by_key[key])
        face_elems[i, 0] = elems[0]
        if len(elems) == 2:
            face_elems[i, 1] = elems[1]

    coords = mesh.vertices[face_vertices]  # (nf, 3, 3)
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    cross = np.cross(e1, e2)
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    if np.any(areas <= 0.0):
        raise MeshTopologyError("degenerate face with zero area")
    normals = cross / np.linalg.norm(cross, axis=1)[:, None]

    # orient outward from E1
    elem_cent = mesh.vertices[mesh.tets].mean(axis=1)
    face_cent = coords.mean(axis=1)
    outward = face_cent - elem_cent[face_elems[:, 0]]
    flip = np.einsum("fd,fd->f", normals, outward) < 0.0
    normals[flip] *= -1.0

    edge = [
        np.linalg.norm(coords[:, 1] - coords[:, 0], axis=1),
        np.linalg.norm(coords[:, 2] - coords[:, 0], axis=1),
        np.linalg.norm(coords[:, 2] - coords[:, 1], axis=1),
    ]
    diameters = np.max(np.stack(edge, axis=1), axis=1)

    mesh.face_vertices = face_vertices
    mesh.face_elems = face_elems
    mesh.face_normals = normals
    mesh.face_areas = areas
    mesh.face_diameters = diameters
    mesh.face_pressure_tags = np.zeros(nf, dtype=np.int8)
    mesh.face_displacement_tags = np.zeros(nf, dtype=np.int8)
    return mesh


_TAG_BY_NAME = {"dirichlet": FaceTag.DIRICHLET, "neumann": FaceTag.NEUMANN}


def tag_boundary(mesh, pressure_rule, displacement_rule):
    """Tag every boundary face for the pressure and displacement problems.

    Each rule maps a face centroid to "dirichlet" or "neumann".  A boundary
    face for which a rule returns anything else is a configuration error:
    there is no silent default.
    """
    for i in np.flatnonzero(mesh.face_elems[:, 1] < 0):
        centroid = mesh.vertices[mesh.face_vertices[i]].mean(axis=0)
        for rule, tags, label in (
            (pressure_rule, mesh.face_pressure_tags, "pressure"),
            (displacement_rule, mesh.face_displacement_tags, "displacement"),
        ):
            kind = rule(centroid)
            if kind not in _TAG_BY_NAME:
                raise ConfigurationError(
                    f"boundary face at {centroid} matched no {label} rule (got {kind!r})"
                )
            tags[i] = _TAG_BY_NAME[kind]
    return mesh
