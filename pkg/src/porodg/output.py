"""Simulation output: legacy VTK files, CSV line samples, run summaries.

DG fields are written with duplicated points (four per tetrahedron) so the
method's inter-element discontinuities survive visualization; saturation
jumps at rock interfaces are real solution features.  All numbers are
formatted with %.17g, making repeated serial runs byte-identical.
"""

import numpy as np

from .constitutive import truncated_saturation
from .errors import SamplingError
from .fields import evaluate_scalar, locate_points


def _fmt(x):
    return f"{float(x):.17g}"


def nodal_saturation(state, material, eps):
    """Clamped saturation at the element nodes, shape (nE, 4)."""
    return truncated_saturation(
        state.pw.coefs, state.po.coefs, material.p_d[:, None], eps
    )


def write_vtk(path, mesh, material, state, eps, scale=0.0, title="simulation state"):
    """Legacy ASCII VTK unstructured grid with point-duplicated DG fields.

    Point data: wetting/non-wetting pressure, saturation, displacement.
    Cell data: permeability, porosity, rock id.  The geometry is warped by
    `scale` times the displacement (0 writes the undeformed mesh).
    """
    coords = mesh.elem_coords.reshape(-1, 3)  # duplicated points, 4 per tet
    if scale != 0.0:
        disp = np.stack([state.u.coefs[c] for c in range(3)], axis=-1).reshape(-1, 3)
        coords = coords + scale * disp
    n_pts = coords.shape[0]
    n_cells = mesh.num_elements
    sw = nodal_saturation(state, material, eps).reshape(-1)

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n_pts} double",
    ]
    lines.extend(" ".join(_fmt(v) for v in p) for p in coords)
    lines.append(f"CELLS {n_cells} {5 * n_cells}")
    lines.extend(
        f"4 {4 * e} {4 * e + 1} {4 * e + 2} {4 * e + 3}" for e in range(n_cells)
    )
    lines.append(f"CELL_TYPES {n_cells}")
    lines.extend("10" for _ in range(n_cells))

    lines.append(f"POINT_DATA {n_pts}")
    for name, arr in (
        ("pressure_w", state.pw.coefs.reshape(-1)),
        ("pressure_o", state.po.coefs.reshape(-1)),
        ("saturation_w", sw),
    ):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in arr)
    lines.append("VECTORS displacement double")
    disp = np.stack([state.u.coefs[c] for c in range(3)], axis=-1).reshape(-1, 3)
    lines.extend(" ".join(_fmt(v) for v in d) for d in disp)

    lines.append(f"CELL_DATA {n_cells}")
    for name, arr in (
        ("permeability", material.K),
        ("porosity", material.phi),
        ("entry_pressure", material.p_d),
    ):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in arr)
    lines.append("SCALARS rock_id int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(int(v)) for v in material.rock_id)

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def sample_line(field, mesh, start, end, npts):
    """Evaluate a DG scalar field along a segment.

    Returns (arclength, values); points on element interfaces take the value
    from the lowest containing element id.  Raises SamplingError if the line
    leaves the mesh.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if npts < 2:
        raise ValueError("need at least two sample points")
    t = np.linspace(0.0, 1.0, npts)
    pts = start[None, :] + t[:, None] * (end - start)[None, :]
    elems = locate_points(mesh, pts)
    vals = evaluate_scalar(field, pts, elems)
    return t * np.linalg.norm(end - start), vals


def write_csv(path, arclength, values, header="s,value"):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for s, v in zip(arclength, values):
            fh.write(f"{_fmt(s)},{_fmt(v)}\n")


def write_run_summary(path, case_name, grid, solve_log, wall_time):
    """Human-readable run record: step counts, solver statistics, wall time."""
    iters = [r.iterations for r in solve_log]
    res = [r.residual for r in solve_log]
    lines = [
        f"case: {case_name}",
        f"startup step + regular steps: 1 + {grid.num_regular_steps}",
        f"linear solves: {len(solve_log)}",
        f"max GMRES iterations per solve: {max(iters) if iters else 0}",
        f"max true residual: {max(res) if res else 0.0:.6e}",
        f"wall time: {wall_time:.3f} s",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
