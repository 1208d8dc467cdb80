"""Interior-penalty DG simulator for two-phase flow in deformable porous media."""

from .constitutive import (
    MaterialField,
    PhysicalParams,
    RockProps,
    cutoff,
    dsw_dpc,
    mobilities,
    rel_perms,
    saturation_of_pc,
    storage_coefficients,
    truncated_saturation,
)
from .errors import (
    AssemblyError,
    ConfigurationError,
    ConvergenceError,
    FactorizationError,
    MeshTopologyError,
    PoroDGError,
    SamplingError,
)
from .fields import DGScalarField, DGVectorField, l2_project, l2_project_vector
from .forms import DiscretizationParams
from .geometry import MeshGeometry
from .linsolve import SolverConfig, factorize, solve
from .mesh import FaceTag, Mesh, build_face_topology, build_structured_tet_mesh, tag_boundary
from .stepper import ProblemData, SequentialStepper, SimulationState, TimeGrid

__version__ = "0.1.0"
