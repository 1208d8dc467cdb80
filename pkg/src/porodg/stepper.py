"""Sequential time stepping: startup solves and the three-step scheme.

Every time step solves, in order, the wetting-phase mass balance for the new
wetting pressure, the non-wetting balance for the new non-wetting pressure,
then the stabilized momentum balance for the new displacement.  Each
sub-problem is linear in its own unknown: storage terms with already-known
fields, the lagged displacement-rate coupling and the pressure-gradient load
all move to the right-hand side.  The first step uses the short startup time
step and modified equations (no lagged terms, no stabilization).

Coefficients built from the previous state (saturation, mobilities, storage
weights) are evaluated pointwise at quadrature points from the P1 pressure
fields; the equivalent-pressure load in the momentum step is evaluated the
same way from the *new* pressures.
"""

import math
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from . import linsolve
from .coefficients import FieldCoefficient
from .constitutive import (
    MOBILITY_MODELS,
    saturation_of_pc,
    storage_coefficients,
    truncated_saturation,
)
from .errors import PoroDGError
from .fields import DGScalarField, DGVectorField, l2_project, l2_project_vector
from .forms import (
    assemble_bp_rhs,
    assemble_bu,
    assemble_diffusion,
    assemble_elasticity,
    assemble_rhs_elasticity,
    assemble_rhs_flow,
    assemble_vector_mass,
    assemble_weighted_mass,
)


@dataclass(frozen=True)
class TimeGrid:
    """Two-value time grid: one short startup step, then uniform steps."""

    tau0: float
    tau: float
    t_end: float

    def __post_init__(self):
        if not 0.0 < self.tau0 <= self.tau:
            raise ValueError(f"need 0 < tau0 <= tau, got {self.tau0}, {self.tau}")
        if self.t_end < self.tau0:
            raise ValueError("final time must be >= the startup step")

    @property
    def num_regular_steps(self):
        return max(0, math.ceil((self.t_end - self.tau0) / self.tau - 1e-9))

    @property
    def num_steps(self):
        """Total number of solves: the startup step plus the regular steps."""
        return 1 + self.num_regular_steps

    def times(self):
        """All discrete times t_0 = 0, t_1 = tau0, t_n = tau0 + (n-1) tau."""
        t = np.empty(self.num_steps + 1)
        t[0] = 0.0
        t[1:] = self.tau0 + self.tau * np.arange(self.num_steps)
        return t


@dataclass
class SimulationState:
    """Current fields plus the one-step-lagged values the scheme needs."""

    n: int
    t: float
    pw: DGScalarField
    po: DGScalarField
    u: DGVectorField
    pw_prev: DGScalarField = None
    po_prev: DGScalarField = None
    u_prev: DGVectorField = None

    def copy(self):
        return SimulationState(
            self.n,
            self.t,
            self.pw.copy(),
            self.po.copy(),
            self.u.copy(),
            None if self.pw_prev is None else self.pw_prev.copy(),
            None if self.po_prev is None else self.po_prev.copy(),
            None if self.u_prev is None else self.u_prev.copy(),
        )


@dataclass
class ProblemData:
    """Sources and boundary data, all vectorized closures of (points, t)."""

    source_w: callable
    source_o: callable
    source_u: callable
    pw_dirichlet: callable = None
    po_dirichlet: callable = None
    gw_neumann: callable = None
    go_neumann: callable = None
    u_dirichlet: callable = None
    traction: callable = None


def zero_scalar(points, t):
    return np.zeros(points.shape[0])


def zero_vector(points, t):
    return np.zeros((points.shape[0], 3))


@dataclass
class SolveRecord:
    step: int
    substep: str
    iterations: int
    residual: float
    preconditioned_residual: float


@dataclass
class Snapshot:
    time_requested: float
    time: float
    state: SimulationState


# ----------------------------------------------------------------------
# coefficient builders (module-level so tests can observe the dataflow)


def saturation_coefficient(pw, po, material, params, cutoff_saturation=True,
                           complement=False):
    """Pointwise saturation (or its complement) as a coefficient field."""
    eps = params.eps_cut
    sign = -1.0 if complement else 1.0
    off = 1.0 if complement else 0.0

    def value(po_v, pw_v, p_d):
        if cutoff_saturation:
            s = truncated_saturation(pw_v, po_v, p_d, eps)
        else:
            s = saturation_of_pc(po_v - pw_v, p_d)
        return off + sign * s

    def slope_po(po_v, pw_v, p_d):
        pc = po_v - pw_v
        if cutoff_saturation:
            pos = pc > 0.0
            safe = np.where(pos, pc, 1.0)
            raw = (p_d / safe) ** 2
            interior = pos & (raw > eps) & (raw < 1.0 - eps)
            ds = np.where(interior, -2.0 * p_d**2 / safe**3, 0.0)
        else:
            ds = -2.0 * p_d**2 / pc**3
        return sign * ds

    def slope_pw(po_v, pw_v, p_d):
        return -slope_po(po_v, pw_v, p_d)

    return FieldCoefficient(
        value, (po, pw), elem_params=(material.p_d,), dfuncs=(slope_po, slope_pw)
    )


def mobility_permeability_coefficient(phase, pw, po, material, params,
                                      mobility_model="brooks_corey",
                                      cutoff_saturation=True):
    """lambda_phase(S_w) * K, evaluated pointwise; two-valued at faces."""
    model = MOBILITY_MODELS[mobility_model]
    eps = params.eps_cut
    idx = 0 if phase == "w" else 1

    def value(po_v, pw_v, p_d, K):
        if cutoff_saturation:
            s = truncated_saturation(pw_v, po_v, p_d, eps)
        else:
            s = saturation_of_pc(po_v - pw_v, p_d)
        return model(s, params)[idx] * K

    return FieldCoefficient(value, (po, pw), elem_params=(material.p_d, material.K))


def storage_coefficient(index, pw, po, material, params, scale=1.0,
                        cutoff_saturation=True):
    """C_index(P_o, P_w) * scale as a mass-matrix weight (index in 1..4)."""

    def value(po_v, pw_v, p_d, phi):
        rock = SimpleNamespace(p_d=p_d, phi=phi)
        c = storage_coefficients(pw_v, po_v, rock, params, cutoff_saturation)
        return scale * c[index - 1]

    return FieldCoefficient(value, (po, pw), elem_params=(material.p_d, material.phi))


def equivalent_pressure(pw, po, material, params, cutoff_saturation=True):
    """S_w P_w + (1 - S_w) P_o as a pointwise expression with gradients."""
    eps = params.eps_cut

    def sat_and_slope(po_v, pw_v, p_d):
        pc = po_v - pw_v
        if cutoff_saturation:
            pos = pc > 0.0
            safe = np.where(pos, pc, 1.0)
            raw = (p_d / safe) ** 2
            s = np.where(pos, np.clip(raw, eps, 1.0 - eps), 1.0 - eps)
            interior = pos & (raw > eps) & (raw < 1.0 - eps)
            ds = np.where(interior, -2.0 * p_d**2 / safe**3, 0.0)
        else:
            s = (p_d / pc) ** 2
            ds = -2.0 * p_d**2 / pc**3
        return s, ds

    def value(po_v, pw_v, p_d):
        s, _ = sat_and_slope(po_v, pw_v, p_d)
        return s * pw_v + (1.0 - s) * po_v

    def slope_po(po_v, pw_v, p_d):
        s, ds = sat_and_slope(po_v, pw_v, p_d)
        return ds * (pw_v - po_v) + (1.0 - s)

    def slope_pw(po_v, pw_v, p_d):
        s, ds = sat_and_slope(po_v, pw_v, p_d)
        return -ds * (pw_v - po_v) + s

    return FieldCoefficient(
        value, (po, pw), elem_params=(material.p_d,), dfuncs=(slope_po, slope_pw)
    )


def storage_increment_term(geom, index, pw_n, po_n, new_field, old_field, dt,
                           material, params, cutoff_saturation):
    """Mass-weighted increment (C_index (new - old)/dt, q_h) as a vector.

    The weight is evaluated at the level-n pressures; `new_field` carries the
    just-computed unknown when the scheme consumes it mid-step.
    """
    c = storage_coefficient(index, pw_n, po_n, scale=1.0 / dt,
                            material=material, params=params,
                            cutoff_saturation=cutoff_saturation)
    return assemble_weighted_mass(c, geom) @ (new_field.dofs() - old_field.dofs())


# ----------------------------------------------------------------------


class SequentialStepper:
    """Drives one simulation; holds the static assembly context.

    A single instance advances strictly sequentially.  Distinct instances
    share no mutable state and may run concurrently.
    """

    def __init__(self, geom, material, params, disc, grid, data,
                 mobility_model="brooks_corey", cutoff_saturation=True,
                 solver_config=None):
        self.geom = geom
        self.material = material
        self.params = params
        self.disc = disc
        self.grid = grid
        self.data = data
        self.mobility_model = mobility_model
        self.cutoff_saturation = cutoff_saturation
        self.solver_config = solver_config or linsolve.SolverConfig()
        self.solve_log = []

        self.elasticity_matrix = assemble_elasticity(geom, params, disc)
        self.vector_mass = assemble_vector_mass(geom)
        self.momentum_lhs = (
            self.elasticity_matrix + (disc.gamma / grid.tau) * self.vector_mass
        ).tocsr()
        # the momentum matrix never changes between regular steps, so its
        # factorization is built once on first use and reused
        self._momentum_precond = None

    # -- helpers -------------------------------------------------------

    def _solve(self, A, rhs, step, substep, precond=None):
        try:
            res = linsolve.solve(A, rhs, self.solver_config, precond=precond)
        except PoroDGError as exc:
            exc.args = (f"step {step}, sub-step {substep}: {exc}",) + exc.args[1:]
            raise
        self.solve_log.append(
            SolveRecord(step, substep, res.iterations, res.residual,
                        res.preconditioned_residual)
        )
        return res.x

    def _coefficient_kwargs(self):
        return dict(material=self.material, params=self.params,
                    cutoff_saturation=self.cutoff_saturation)

    def _flow_system(self, phase, pw_c, po_c, storage_index, dt):
        """Mass + diffusion matrix and the mobility coefficient for one phase."""
        kw = self._coefficient_kwargs()
        mob = mobility_permeability_coefficient(
            phase, pw_c, po_c, mobility_model=self.mobility_model, **kw
        )
        cmass = storage_coefficient(storage_index, pw_c, po_c, scale=1.0 / dt, **kw)
        M = assemble_weighted_mass(cmass, self.geom)
        A = assemble_diffusion(mob, self.geom, self.disc, "pressure")
        return M, A, mob

    def _rhs_flow(self, phase, mob, t):
        d = self.data
        if phase == "w":
            return assemble_rhs_flow(self.geom, self.disc, mob, t,
                                     d.source_w, d.pw_dirichlet, d.gw_neumann)
        return assemble_rhs_flow(self.geom, self.disc, mob, t,
                                 d.source_o, d.po_dirichlet, d.go_neumann)

    # -- the scheme ----------------------------------------------------

    def initialize(self, pw0, po0, u0):
        """State at step 0: element-wise L2 projections of the initial data.

        Prebuilt DG fields pass through unchanged (a discrete field is its
        own projection); callables of point arrays are projected.
        """
        pw = pw0 if isinstance(pw0, DGScalarField) else l2_project(pw0, self.geom)
        po = po0 if isinstance(po0, DGScalarField) else l2_project(po0, self.geom)
        u = u0 if isinstance(u0, DGVectorField) else l2_project_vector(u0, self.geom)
        return SimulationState(n=0, t=0.0, pw=pw, po=po, u=u)

    def startup_step(self, state):
        """Advance from step 0 to step 1 with the modified short-step equations."""
        if state.n != 0:
            raise ValueError("startup_step requires the initial state")
        geom, disc, data = self.geom, self.disc, self.data
        tau0 = self.grid.tau0
        t1 = tau0

        M1, A1, mob_w = self._flow_system("w", state.pw, state.po, 1, tau0)
        rhs = M1 @ state.pw.dofs() + self._rhs_flow("w", mob_w, t1)
        pw1 = DGScalarField.from_dofs(geom.mesh, self._solve(M1 + A1, rhs, 1, "wetting"))

        M3, A3, mob_o = self._flow_system("o", state.pw, state.po, 3, tau0)
        kw = self._coefficient_kwargs()
        rhs = (
            M3 @ state.po.dofs()
            + self._rhs_flow("o", mob_o, t1)
            - storage_increment_term(geom, 4, state.pw, state.po,
                                     pw1, state.pw, tau0, **kw)
        )
        po1 = DGScalarField.from_dofs(geom.mesh, self._solve(M3 + A3, rhs, 1, "nonwetting"))

        # displacement at step 1: consistent solve without stabilization
        peq = equivalent_pressure(pw1, po1, self.material, self.params,
                                  self.cutoff_saturation)
        rhs = assemble_rhs_elasticity(
            geom, disc, self.params, t1, data.source_u, data.u_dirichlet, data.traction
        ) - assemble_bp_rhs(peq, geom)
        u1 = DGVectorField.from_dofs(
            geom.mesh, self._solve(self.elasticity_matrix, rhs, 1, "displacement")
        )

        return SimulationState(
            n=1, t=t1, pw=pw1, po=po1, u=u1,
            pw_prev=state.pw, po_prev=state.po, u_prev=state.u,
        )

    def step(self, state):
        """One regular step n -> n+1 (three sequential linear solves)."""
        if state.n < 1 or state.pw_prev is None:
            raise ValueError("step requires a started state with lagged fields")
        geom, disc, data = self.geom, self.disc, self.data
        tau = self.grid.tau
        t_next = state.t + tau
        n_next = state.n + 1
        alpha = self.params.alpha
        kw = self._coefficient_kwargs()

        du = (state.u.dofs() - state.u_prev.dofs()) / tau

        # step 1: wetting pressure
        M1, A1, mob_w = self._flow_system("w", state.pw, state.po, 1, tau)
        sat_n = saturation_coefficient(state.pw, state.po, **kw)
        bu_w = assemble_bu(sat_n, geom)
        rhs = (
            M1 @ state.pw.dofs()
            - storage_increment_term(geom, 2, state.pw, state.po,
                                     state.po, state.po_prev, tau, **kw)
            - alpha * (bu_w @ du)
            + self._rhs_flow("w", mob_w, t_next)
        )
        pw_new = DGScalarField.from_dofs(
            geom.mesh, self._solve(M1 + A1, rhs, n_next, "wetting")
        )

        # step 2: non-wetting pressure, consuming the new wetting pressure
        M3, A3, mob_o = self._flow_system("o", state.pw, state.po, 3, tau)
        sat_comp = saturation_coefficient(state.pw, state.po, complement=True, **kw)
        bu_o = assemble_bu(sat_comp, geom)
        rhs = (
            M3 @ state.po.dofs()
            - storage_increment_term(geom, 4, state.pw, state.po,
                                     pw_new, state.pw, tau, **kw)
            - alpha * (bu_o @ du)
            + self._rhs_flow("o", mob_o, t_next)
        )
        po_new = DGScalarField.from_dofs(
            geom.mesh, self._solve(M3 + A3, rhs, n_next, "nonwetting")
        )

        # step 3: displacement, loaded by the new equivalent pressure
        peq = equivalent_pressure(pw_new, po_new, self.material, self.params,
                                  self.cutoff_saturation)
        rhs = (
            assemble_rhs_elasticity(
                geom, disc, self.params, t_next,
                data.source_u, data.u_dirichlet, data.traction,
            )
            - assemble_bp_rhs(peq, geom)
            + (disc.gamma / tau) * (self.vector_mass @ (2.0 * state.u.dofs() - state.u_prev.dofs()))
        )
        if self._momentum_precond is None:
            self._momentum_precond = linsolve.factorize(
                self.momentum_lhs, self.solver_config.preconditioner, self.solver_config
            )
        u_new = DGVectorField.from_dofs(
            geom.mesh,
            self._solve(self.momentum_lhs, rhs, n_next, "displacement",
                        precond=self._momentum_precond),
        )

        return SimulationState(
            n=n_next, t=t_next, pw=pw_new, po=po_new, u=u_new,
            pw_prev=state.pw, po_prev=state.po, u_prev=state.u,
        )

    def run(self, pw0, po0, u0, snapshot_times=(), progress=None):
        """Full run from the initial data; returns snapshots at the requested
        times (nearest completed step, no interpolation, deep copies)."""
        times = self.grid.times()
        wanted = {}
        for t_req in snapshot_times:
            idx = int(np.argmin(np.abs(times - t_req)))
            wanted.setdefault(idx, []).append(t_req)

        snapshots = []

        def record(state):
            for t_req in wanted.get(state.n, []):
                snapshots.append(Snapshot(t_req, state.t, state.copy()))

        state = self.initialize(pw0, po0, u0)
        record(state)
        state = self.startup_step(state)
        record(state)
        while state.n < self.grid.num_steps:
            state = self.step(state)
            record(state)
            if progress is not None:
                progress(state)
        return state, snapshots
