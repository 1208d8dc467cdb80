"""Case configuration: JSON schema, bundled scenarios, materials, runner.

A case file is a single JSON document (schema_version 1) describing the
domain box and resolution, time grid, physical and discretization
parameters, rock table and assignment, per-plane boundary conditions for
pressure and displacement, the initial state and an output plan.  Unknown
keys are rejected.  Times may be given in seconds or days ("time.unit");
everything is converted to seconds at parse time (86400 s/day).

Bundled scenario files live in the package data directory and are the
single source of truth for the benchmark set-ups; `--coarse` quarters the
resolution per axis for desk-scale runs.
"""

import json
import time as _time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft7Validator

from .constitutive import MaterialField, PhysicalParams, RockProps
from .errors import CaseParseError, ConfigurationError
from .fields import DGScalarField, DGVectorField
from .forms import DiscretizationParams
from .geometry import MeshGeometry
from .mesh import build_structured_tet_mesh, tag_boundary
from .output import sample_line, write_csv, write_run_summary, write_vtk
from .stepper import ProblemData, SequentialStepper, SimulationState, TimeGrid

DAY = 86400.0
PLANES = ("x0", "x1", "y0", "y1", "z0", "z1")

_NUM = {"type": "number"}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_INTERVAL = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

_PRESSURE_BC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "dirichlet"}, "pw": _NUM, "po": _NUM},
            "required": ["type", "pw", "po"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "neumann"}, "gw": _NUM, "go": _NUM},
            "required": ["type", "gw", "go"],
            "additionalProperties": False,
        },
    ]
}

_RAMP = {
    "type": "object",
    "properties": {"direction": _VEC3, "magnitude": _NUM},
    "required": ["direction", "magnitude"],
    "additionalProperties": False,
}

_DISPLACEMENT_BC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "dirichlet"}, "value": _VEC3},
            "required": ["type", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "neumann"},
                "traction": _VEC3,
                "traction_ramp": _RAMP,
            },
            "required": ["type"],
            "additionalProperties": False,
        },
    ]
}

_ROCK = {
    "type": "object",
    "properties": {"K": _NUM, "phi": _NUM, "p_d": _NUM},
    "required": ["K", "phi", "p_d"],
    "additionalProperties": False,
}

CASE_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": 1},
        "name": {"type": "string"},
        "domain": {
            "type": "object",
            "properties": {
                "box": {
                    "type": "array",
                    "items": _INTERVAL,
                    "minItems": 3,
                    "maxItems": 3,
                },
                "resolution": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 3,
                    "maxItems": 3,
                },
            },
            "required": ["box", "resolution"],
            "additionalProperties": False,
        },
        "time": {
            "type": "object",
            "properties": {
                "unit": {"enum": ["s", "day"]},
                "tau0": _NUM,
                "tau": _NUM,
                "t_end": _NUM,
            },
            "required": ["unit", "tau0", "tau", "t_end"],
            "additionalProperties": False,
        },
        "physical": {
            "type": "object",
            "properties": {
                "mu_w": _NUM,
                "mu_o": _NUM,
                "K_w": _NUM,
                "K_o": _NUM,
                "K_s": _NUM,
                "inv_K_w": _NUM,
                "inv_K_o": _NUM,
                "inv_K_s": _NUM,
                "lam": _NUM,
                "mu": _NUM,
                "alpha": _NUM,
                "eps_cut": _NUM,
            },
            "required": ["mu_w", "mu_o", "lam", "mu", "alpha"],
            "additionalProperties": False,
        },
        "discretization": {
            "type": "object",
            "properties": {
                "sigma_p": _NUM,
                "sigma_u": _NUM,
                "eps_p": {"enum": [-1, 1]},
                "eps_u": {"enum": [-1, 1]},
                "gamma": _NUM,
                "quad_volume_order": {"type": "integer"},
                "quad_face_order": {"type": "integer"},
            },
            "required": ["sigma_p", "sigma_u", "gamma"],
            "additionalProperties": False,
        },
        "material": {
            "type": "object",
            "properties": {
                "rocks": {
                    "type": "object",
                    "patternProperties": {"^[0-9]+$": _ROCK},
                    "additionalProperties": False,
                },
                "assignment": {
                    "oneOf": [
                        {
                            "type": "object",
                            "properties": {
                                "type": {"const": "uniform"},
                                "rock": {"type": "string"},
                            },
                            "required": ["type", "rock"],
                            "additionalProperties": False,
                        },
                        {
                            "type": "object",
                            "properties": {
                                "type": {"const": "boxes"},
                                "background": {"type": "string"},
                                "boxes": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "properties": {
                                            "box": {
                                                "type": "array",
                                                "items": _INTERVAL,
                                                "minItems": 3,
                                                "maxItems": 3,
                                            },
                                            "rock": {"type": "string"},
                                        },
                                        "required": ["box", "rock"],
                                        "additionalProperties": False,
                                    },
                                },
                            },
                            "required": ["type", "background", "boxes"],
                            "additionalProperties": False,
                        },
                        {
                            "type": "object",
                            "properties": {
                                "type": {"const": "raster"},
                                "dims": {
                                    "type": "array",
                                    "items": {"type": "integer", "minimum": 1},
                                    "minItems": 3,
                                    "maxItems": 3,
                                },
                                "permeability_file": {"type": ["string", "null"]},
                                "porosity_file": {"type": ["string", "null"]},
                                "p_d": _NUM,
                            },
                            "required": ["type", "dims", "p_d"],
                            "additionalProperties": False,
                        },
                    ]
                },
            },
            "required": ["rocks", "assignment"],
            "additionalProperties": False,
        },
        "boundary": {
            "type": "object",
            "properties": {
                "pressure": {
                    "type": "object",
                    "properties": {p: _PRESSURE_BC for p in PLANES},
                    "required": list(PLANES),
                    "additionalProperties": False,
                },
                "displacement": {
                    "type": "object",
                    "properties": {p: _DISPLACEMENT_BC for p in PLANES},
                    "required": list(PLANES),
                    "additionalProperties": False,
                },
            },
            "required": ["pressure", "displacement"],
            "additionalProperties": False,
        },
        "initial": {
            "type": "object",
            "properties": {
                "pw": _NUM,
                "po": _NUM,
                "sw_by_rock": {
                    "type": "object",
                    "patternProperties": {"^[0-9]+$": _NUM},
                    "additionalProperties": False,
                },
                "u": _VEC3,
            },
            "required": ["po", "u"],
            "additionalProperties": False,
        },
        "mobility_model": {"enum": ["brooks_corey", "linear"]},
        "cutoff": {"type": "boolean"},
        "output": {
            "type": "object",
            "properties": {
                "times": {"type": "array", "items": _NUM},
                "displacement_scale": _NUM,
                "line_samples": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "name": {"type": "string"},
                            "start": _VEC3,
                            "end": _VEC3,
                            "npts": {"type": "integer", "minimum": 2},
                            "fields": {
                                "type": "array",
                                "items": {"enum": ["sw", "pw", "po"]},
                            },
                        },
                        "required": ["name", "start", "end", "npts", "fields"],
                        "additionalProperties": False,
                    },
                },
            },
            "required": ["times"],
            "additionalProperties": False,
        },
    },
    "required": [
        "schema_version", "name", "domain", "time", "physical",
        "discretization", "material", "boundary", "initial", "output",
    ],
    "additionalProperties": False,
}

_VALIDATOR = Draft7Validator(CASE_SCHEMA)


@dataclass
class RasterField:
    """Rectilinear per-cell values covering the domain box, x-fastest."""

    dims: tuple
    values: np.ndarray

    def __post_init__(self):
        nx, ny, nz = self.dims
        if self.values.size != nx * ny * nz:
            raise CaseParseError(
                f"raster has {self.values.size} values, expected {nx * ny * nz}"
            )

    def value_at(self, points, box):
        """Value of the cell containing each point (clamped to the box)."""
        pts = np.atleast_2d(points)
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        n = np.array(self.dims)
        idx = np.clip(
            np.floor((pts - lo) / (hi - lo) * n).astype(int), 0, n - 1
        )
        flat = idx[:, 0] + n[0] * (idx[:, 1] + n[1] * idx[:, 2])
        return self.values[flat]


def load_raster(path, dims):
    """Plain-text raster: nx*ny*nz whitespace-separated values, x-fastest."""
    values = np.loadtxt(path).reshape(-1)
    return RasterField(tuple(dims), values)


@dataclass
class CaseConfig:
    """Validated, unit-normalized case description."""

    name: str
    box: tuple
    resolution: tuple
    grid: TimeGrid
    params: PhysicalParams
    disc: DiscretizationParams
    rocks: dict
    assignment: dict
    boundary: dict
    initial: dict
    output: dict
    mobility_model: str = "brooks_corey"
    cutoff: bool = True
    raw: dict = field(default=None, repr=False)


def _inverse_modulus(phys, name):
    direct = phys.get(f"K_{name}")
    inverse = phys.get(f"inv_K_{name}")
    if (direct is None) == (inverse is None):
        raise CaseParseError(
            f"physical: give exactly one of K_{name} or inv_K_{name}"
        )
    return 1.0 / direct if direct is not None else inverse


def parse_case(source):
    """Parse and validate a case file (path, JSON string or dict).

    Raises CaseParseError with the offending path and key on any schema
    violation; boundary tables must cover all six box planes.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else None
        if text is None:
            raise CaseParseError(f"case file not found: {source}")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CaseParseError(f"invalid JSON in {source}: {exc}") from exc

    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise CaseParseError(f"schema violation at {where}: {e.message}")

    unit = DAY if doc["time"]["unit"] == "day" else 1.0
    grid = TimeGrid(
        tau0=doc["time"]["tau0"] * unit,
        tau=doc["time"]["tau"] * unit,
        t_end=doc["time"]["t_end"] * unit,
    )
    phys = doc["physical"]
    params = PhysicalParams(
        mu_w=phys["mu_w"],
        mu_o=phys["mu_o"],
        inv_kw=_inverse_modulus(phys, "w"),
        inv_ko=_inverse_modulus(phys, "o"),
        inv_ks=_inverse_modulus(phys, "s"),
        lam=phys["lam"],
        mu=phys["mu"],
        alpha=phys["alpha"],
        eps_cut=phys.get("eps_cut", 1e-8),
    )
    d = doc["discretization"]
    disc = DiscretizationParams(
        sigma_p=d["sigma_p"],
        sigma_u=d["sigma_u"],
        eps_p=d.get("eps_p", -1),
        eps_u=d.get("eps_u", -1),
        gamma=d["gamma"],
        quad_volume_order=d.get("quad_volume_order", 4),
        quad_face_order=d.get("quad_face_order", 4),
    )
    rocks = {
        rid: RockProps(K=r["K"], phi=r["phi"], p_d=r["p_d"], rock_id=int(rid))
        for rid, r in doc["material"]["rocks"].items()
    }
    assignment = doc["material"]["assignment"]
    _check_assignment_rocks(assignment, rocks)
    initial = dict(doc["initial"])
    if ("pw" in initial) == ("sw_by_rock" in initial):
        raise CaseParseError("initial: give exactly one of pw or sw_by_rock")
    if "sw_by_rock" in initial:
        missing = set(rocks) - set(initial["sw_by_rock"])
        if missing and assignment["type"] != "raster":
            raise CaseParseError(f"initial.sw_by_rock missing rocks {sorted(missing)}")
    output = dict(doc["output"])
    output["times"] = [t * unit for t in output["times"]]
    output.setdefault("displacement_scale", 0.0)
    output.setdefault("line_samples", [])

    return CaseConfig(
        name=doc["name"],
        box=tuple(tuple(b) for b in doc["domain"]["box"]),
        resolution=tuple(doc["domain"]["resolution"]),
        grid=grid,
        params=params,
        disc=disc,
        rocks=rocks,
        assignment=assignment,
        boundary=doc["boundary"],
        initial=initial,
        output=output,
        mobility_model=doc.get("mobility_model", "brooks_corey"),
        cutoff=doc.get("cutoff", True),
        raw=doc,
    )


def _check_assignment_rocks(assignment, rocks):
    used = []
    if assignment["type"] == "uniform":
        used = [assignment["rock"]]
    elif assignment["type"] == "boxes":
        used = [assignment["background"]] + [b["rock"] for b in assignment["boxes"]]
    for rid in used:
        if rid not in rocks:
            raise CaseParseError(f"assignment references unknown rock {rid!r}")


def bundled_case_path(name):
    return resources.files("porodg").joinpath("data", f"{name}.json")


def load_bundled_case(name):
    path = bundled_case_path(name)
    if not path.is_file():
        raise CaseParseError(f"no bundled case named {name!r}")
    return parse_case(json.loads(path.read_text()))


# ----------------------------------------------------------------------
# mesh / material / data construction


def coarse_resolution(resolution, factor=4):
    return tuple(max(1, n // factor) for n in resolution)


def build_mesh(cfg, coarse=False):
    res = coarse_resolution(cfg.resolution) if coarse else cfg.resolution
    return build_structured_tet_mesh(*res, cfg.box)


def assign_materials(mesh, cfg):
    """Per-element material arrays from the case's assignment spec.

    Region boxes assign by centroid containment with later boxes overriding
    earlier ones; rasters assign the value of the cell containing the
    centroid.  Every element must receive exactly one assignment.
    """
    cent = mesh.elem_centroids
    n = mesh.num_elements
    a = cfg.assignment
    if a["type"] == "uniform":
        return MaterialField.uniform(cfg.rocks[a["rock"]], n)
    if a["type"] == "boxes":
        rock_of = np.full(n, -1, dtype=np.int64)
        order = {rid: i for i, rid in enumerate(cfg.rocks)}
        rock_of[:] = order[a["background"]]
        for b in a["boxes"]:
            lo = np.array([iv[0] for iv in b["box"]])
            hi = np.array([iv[1] for iv in b["box"]])
            inside = np.all((cent >= lo) & (cent <= hi), axis=1)
            rock_of[inside] = order[b["rock"]]
        if np.any(rock_of < 0):
            raise ConfigurationError("element centroid not covered by any region")
        rlist = list(cfg.rocks.values())
        return MaterialField(
            K=np.array([rlist[i].K for i in rock_of]),
            phi=np.array([rlist[i].phi for i in rock_of]),
            p_d=np.array([rlist[i].p_d for i in rock_of]),
            rock_id=np.array([rlist[i].rock_id for i in rock_of]),
        )
    if a["type"] == "raster":
        if not a.get("permeability_file"):
            raise ConfigurationError("raster assignment needs a permeability file")
        perm = load_raster(a["permeability_file"], a["dims"])
        K = perm.value_at(cent, cfg.box)
        if np.any(K <= 0.0):
            raise ConfigurationError("raster permeability must be positive")
        if a.get("porosity_file"):
            phi = load_raster(a["porosity_file"], a["dims"]).value_at(cent, cfg.box)
            if np.any((phi <= 0.0) | (phi >= 1.0)):
                raise ConfigurationError("raster porosity must lie in (0, 1)")
        else:
            phi = np.full(n, next(iter(cfg.rocks.values())).phi)
        return MaterialField(
            K=K,
            phi=phi,
            p_d=np.full(n, a["p_d"]),
            rock_id=np.zeros(n, dtype=np.int64),
        )
    raise ConfigurationError(f"unknown assignment type {a['type']!r}")


def _plane_of(centroid, box, tol_rel=1e-9):
    for axis in range(3):
        lo, hi = box[axis]
        tol = tol_rel * (hi - lo)
        if abs(centroid[axis] - lo) < tol:
            return f"{'xyz'[axis]}0"
        if abs(centroid[axis] - hi) < tol:
            return f"{'xyz'[axis]}1"
    return None


def boundary_rules(cfg):
    """Tagging predicates (pressure, displacement) from the plane tables."""

    def make(table, label):
        def rule(centroid):
            plane = _plane_of(centroid, cfg.box)
            if plane is None:
                raise ConfigurationError(
                    f"{label} boundary face at {centroid} lies on no box plane"
                )
            return table[plane]["type"]

        return rule

    return make(cfg.boundary["pressure"], "pressure"), make(
        cfg.boundary["displacement"], "displacement"
    )


def _plane_masks(points, box, tol_rel=1e-9):
    masks = {}
    for axis in range(3):
        lo, hi = box[axis]
        tol = tol_rel * (hi - lo)
        masks[f"{'xyz'[axis]}0"] = np.abs(points[:, axis] - lo) < tol
        masks[f"{'xyz'[axis]}1"] = np.abs(points[:, axis] - hi) < tol
    return masks


def problem_data(cfg):
    """Boundary and source closures for the stepper, all plane-wise constant
    in space; tractions may ramp linearly in time (r(t) = r_max t / t_end)."""
    box = cfg.box
    ptab = cfg.boundary["pressure"]
    utab = cfg.boundary["displacement"]
    t_end = cfg.grid.t_end

    def scalar_from(table, key):
        def data(points, t):
            out = np.zeros(points.shape[0])
            masks = _plane_masks(points, box)
            for plane, bc in table.items():
                if key in bc:
                    out[masks[plane]] = bc[key]
            return out

        return data

    def u_dirichlet(points, t):
        out = np.zeros((points.shape[0], 3))
        masks = _plane_masks(points, box)
        for plane, bc in utab.items():
            if bc["type"] == "dirichlet":
                out[masks[plane]] = np.asarray(bc["value"])
        return out

    def traction(points, t):
        out = np.zeros((points.shape[0], 3))
        masks = _plane_masks(points, box)
        for plane, bc in utab.items():
            if bc["type"] != "neumann":
                continue
            g = np.asarray(bc.get("traction", [0.0, 0.0, 0.0]), dtype=float)
            ramp = bc.get("traction_ramp")
            if ramp is not None:
                g = g + np.asarray(ramp["direction"]) * (
                    ramp["magnitude"] * t / t_end
                )
            out[masks[plane]] = g
        return out

    from .stepper import zero_scalar, zero_vector

    return ProblemData(
        source_w=zero_scalar,
        source_o=zero_scalar,
        source_u=zero_vector,
        pw_dirichlet=scalar_from(ptab, "pw"),
        po_dirichlet=scalar_from(ptab, "po"),
        gw_neumann=scalar_from(ptab, "gw"),
        go_neumann=scalar_from(ptab, "go"),
        u_dirichlet=u_dirichlet,
        traction=traction,
    )


def initial_state(cfg, geom, material):
    """State at step 0 from the case's initial block.

    Constant data projects to itself; per-rock initial saturation yields an
    element-wise constant wetting pressure pw = po - p_d / sqrt(sw)."""
    n = geom.n_elem
    po = DGScalarField(geom.mesh, np.full((n, 4), float(cfg.initial["po"])))
    if "pw" in cfg.initial:
        pw_elem = np.full(n, float(cfg.initial["pw"]))
    else:
        sw = np.empty(n)
        by_rock = {int(k): v for k, v in cfg.initial["sw_by_rock"].items()}
        for rid, s in by_rock.items():
            sw[material.rock_id == rid] = s
        pw_elem = cfg.initial["po"] - material.p_d / np.sqrt(sw)
    pw = DGScalarField(geom.mesh, np.repeat(pw_elem[:, None], 4, axis=1))
    u0 = np.asarray(cfg.initial["u"], dtype=float)
    u = DGVectorField.constant(geom.mesh, u0)
    return SimulationState(n=0, t=0.0, pw=pw, po=po, u=u)


def build_stepper(cfg, coarse=False, solver_config=None):
    """Mesh, materials, tagging and a ready stepper for one case."""
    mesh = build_mesh(cfg, coarse)
    p_rule, u_rule = boundary_rules(cfg)
    tag_boundary(mesh, p_rule, u_rule)
    geom = MeshGeometry(mesh, cfg.disc.quad_volume_order, cfg.disc.quad_face_order)
    material = assign_materials(mesh, cfg)
    data = problem_data(cfg)
    stepper = SequentialStepper(
        geom, material, cfg.params, cfg.disc, cfg.grid, data,
        mobility_model=cfg.mobility_model,
        cutoff_saturation=cfg.cutoff,
        solver_config=solver_config,
    )
    return stepper, material


def saturation_field(state, material, eps):
    from .output import nodal_saturation

    return DGScalarField(state.pw.mesh, nodal_saturation(state, material, eps))


def execute_case(cfg, out_dir, coarse=False, snapshot_times=None, scale=None,
                 solver_config=None, progress=None):
    """Run a case end to end and write VTK, CSV and summary outputs.

    Returns (final state, snapshots, stepper, material).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = _time.perf_counter()
    stepper, material = build_stepper(cfg, coarse, solver_config)
    state0 = initial_state(cfg, stepper.geom, material)
    times = cfg.output["times"] if snapshot_times is None else list(snapshot_times)
    final_state, snapshots = stepper.run(
        state0.pw, state0.po, state0.u, snapshot_times=times, progress=progress
    )
    eps = cfg.params.eps_cut
    warp = cfg.output["displacement_scale"] if scale is None else scale

    for idx, snap in enumerate(snapshots):
        stem = f"{cfg.name}_snap{idx:03d}"
        write_vtk(
            out / f"{stem}.vtk", stepper.geom.mesh, material, snap.state,
            eps, scale=warp, title=f"{cfg.name} t={snap.time:g}s",
        )
        for ls in cfg.output["line_samples"]:
            for fname in ls["fields"]:
                if fname == "sw":
                    fld = saturation_field(snap.state, material, eps)
                else:
                    fld = snap.state.pw if fname == "pw" else snap.state.po
                s, vals = sample_line(
                    fld, stepper.geom.mesh, ls["start"], ls["end"], ls["npts"]
                )
                write_csv(out / f"{stem}_{ls['name']}_{fname}.csv", s, vals)

    write_run_summary(
        out / f"{cfg.name}_summary.txt", cfg.name, stepper.grid,
        stepper.solve_log, _time.perf_counter() - t0,
    )
    return final_state, snapshots, stepper, material
