"""Sequential scheme: startup, fixed points, dataflow, saturation bounds."""

import numpy as np
import pytest

import porodg.stepper as stepper_mod
from porodg import (
    DiscretizationParams,
    MeshGeometry,
    PhysicalParams,
    ProblemData,
    SequentialStepper,
    TimeGrid,
    build_structured_tet_mesh,
    tag_boundary,
)
from porodg.constitutive import MaterialField, RockProps, truncated_saturation
from porodg.stepper import zero_scalar, zero_vector

UNIT_BOX = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))

PW0, PO0 = 184000.0, 234000.0


def mcwhorter_like_setup(n=2):
    """Small uniform medium with Dirichlet pressures matching the initial state."""
    mesh = build_structured_tet_mesh(n, n, n, UNIT_BOX)
    tol = 1e-9

    def p_rule(c):
        return "dirichlet" if c[0] < tol else "neumann"

    def u_rule(c):
        return "dirichlet" if c[0] < tol or c[0] > 1.0 - tol else "neumann"

    tag_boundary(mesh, p_rule, u_rule)
    geom = MeshGeometry(mesh)
    material = MaterialField.uniform(
        RockProps(K=1e-10, phi=0.3, p_d=5000.0), mesh.num_elements
    )
    params = PhysicalParams(
        mu_w=0.001, mu_o=0.001, inv_kw=0.0, inv_ko=0.0,
        inv_ks=1.0 / 8333333.0, lam=7142857.0, mu=1785714.0, alpha=1.0,
    )
    disc = DiscretizationParams(sigma_p=400.0, sigma_u=1000.0, gamma=1e5)
    grid = TimeGrid(tau0=0.01, tau=1.0, t_end=5.0)
    data = ProblemData(
        source_w=zero_scalar,
        source_o=zero_scalar,
        source_u=zero_vector,
        pw_dirichlet=lambda p, t: np.full(p.shape[0], PW0),
        po_dirichlet=lambda p, t: np.full(p.shape[0], PO0),
        gw_neumann=zero_scalar,
        go_neumann=zero_scalar,
        u_dirichlet=lambda p, t: np.zeros((p.shape[0], 3)),
        traction=zero_vector,
    )
    return SequentialStepper(geom, material, params, disc, grid, data)


def test_time_grid():
    g = TimeGrid(tau0=0.01, tau=1.0, t_end=5.0)
    assert g.num_regular_steps == 5
    assert g.num_steps == 6
    t = g.times()
    assert t[0] == 0.0 and t[1] == 0.01
    assert t[-1] == pytest.approx(5.01)
    assert TimeGrid(tau0=0.5, tau=0.5, t_end=0.5).num_steps == 1
    with pytest.raises(ValueError):
        TimeGrid(tau0=2.0, tau=1.0, t_end=5.0)
    with pytest.raises(ValueError):
        TimeGrid(tau0=0.1, tau=1.0, t_end=0.05)


def test_initialize_constants():
    s = mcwhorter_like_setup()
    state = s.initialize(
        lambda p: np.full(p.shape[0], PW0),
        lambda p: np.full(p.shape[0], PO0),
        lambda p: np.zeros((p.shape[0], 3)),
    )
    assert np.allclose(state.pw.coefs, PW0, atol=1e-9 * PW0)
    assert np.allclose(state.po.coefs, PO0, atol=1e-9 * PO0)
    assert np.max(np.abs(state.u.coefs)) < 1e-12
    assert state.n == 0 and state.pw_prev is None


def test_initialize_linear_exact():
    s = mcwhorter_like_setup()
    state = s.initialize(
        lambda p: PW0 + 100.0 * p[:, 0],
        lambda p: np.full(p.shape[0], PO0),
        lambda p: np.stack([p[:, 0], p[:, 1], 0 * p[:, 2]], axis=1) * 1e-6,
    )
    verts = s.geom.mesh.vertices[s.geom.mesh.tets]
    assert np.allclose(state.pw.coefs, PW0 + 100.0 * verts[:, :, 0], rtol=1e-12)


def test_steady_state_is_fixed_point():
    s = mcwhorter_like_setup()
    state = s.initialize(
        lambda p: np.full(p.shape[0], PW0),
        lambda p: np.full(p.shape[0], PO0),
        lambda p: np.zeros((p.shape[0], 3)),
    )
    state = s.startup_step(state)
    # solver tolerance in the forward-error sense: the penalty-dominated
    # systems have condition numbers near 1e9, so ~1e-7 relative is the floor
    assert np.allclose(state.pw.coefs, PW0, rtol=1e-6)
    assert np.allclose(state.po.coefs, PO0, rtol=1e-6)
    assert np.max(np.abs(state.u.coefs)) < 1e-8
    # the regular step has a 100x smaller storage term (tau vs tau0), hence
    # a ~1e11 condition number and a ~1e-5 relative forward-error floor
    nxt = s.step(state)
    assert np.allclose(nxt.pw.coefs, PW0, rtol=1e-4)
    assert np.allclose(nxt.po.coefs, PO0, rtol=1e-4)
    assert np.max(np.abs(nxt.u.coefs)) < 1e-7


def test_run_startup_only_when_t_end_equals_tau0():
    s = mcwhorter_like_setup()
    s.grid = TimeGrid(tau0=0.01, tau=1.0, t_end=0.01)
    final, snaps = s.run(
        lambda p: np.full(p.shape[0], PW0),
        lambda p: np.full(p.shape[0], PO0),
        lambda p: np.zeros((p.shape[0], 3)),
        snapshot_times=(0.0, 0.01),
    )
    assert final.n == 1
    assert [sn.state.n for sn in snaps] == [0, 1]


def test_state_rotation_keeps_lagged_fields():
    s = mcwhorter_like_setup()
    state0 = s.initialize(
        lambda p: np.full(p.shape[0], PW0),
        lambda p: np.full(p.shape[0], PO0),
        lambda p: np.zeros((p.shape[0], 3)),
    )
    state1 = s.startup_step(state0)
    assert state1.pw_prev is state0.pw
    state2 = s.step(state1)
    assert state2.pw_prev is state1.pw
    assert state2.po_prev is state1.po
    assert state2.u_prev is state1.u
    assert state2.n == 2 and state2.t == pytest.approx(1.01)


def test_step2_consumes_new_wetting_pressure(monkeypatch):
    """The C4 increment uses P_w^{n+1}; the momentum load uses both new pressures."""
    s = mcwhorter_like_setup()
    calls = []
    real_increment = stepper_mod.storage_increment_term

    def spy_increment(geom, index, pw_n, po_n, new_field, old_field, dt, **kw):
        calls.append(("C%d" % index, pw_n, po_n, new_field, old_field))
        return real_increment(geom, index, pw_n, po_n, new_field, old_field, dt, **kw)

    peq_calls = []
    real_peq = stepper_mod.equivalent_pressure

    def spy_peq(pw, po, material, params, cutoff_saturation=True):
        peq_calls.append((pw, po))
        return real_peq(pw, po, material, params, cutoff_saturation)

    monkeypatch.setattr(stepper_mod, "storage_increment_term", spy_increment)
    monkeypatch.setattr(stepper_mod, "equivalent_pressure", spy_peq)

    state = s.initialize(
        lambda p: np.full(p.shape[0], PW0),
        lambda p: np.full(p.shape[0], PO0),
        lambda p: np.zeros((p.shape[0], 3)),
    )
    state = s.startup_step(state)
    calls.clear()
    peq_calls.clear()
    new = s.step(state)

    c2 = [c for c in calls if c[0] == "C2"]
    c4 = [c for c in calls if c[0] == "C4"]
    assert len(c2) == 1 and len(c4) == 1
    # C2 term: lagged non-wetting increment, weights at level n
    assert c2[0][3] is state.po and c2[0][4] is state.po_prev
    # C4 term: the just-computed wetting pressure, not the level-n one
    assert c4[0][3] is new.pw
    assert c4[0][4] is state.pw
    assert c4[0][1] is state.pw and c4[0][2] is state.po  # weights at level n
    # momentum load built from the new pressures
    assert peq_calls[-1][0] is new.pw and peq_calls[-1][1] is new.po


def test_saturation_in_bounds_after_startup_and_step():
    s = mcwhorter_like_setup()
    data = s.data
    # drive the left face to high wetting saturation as in a displacement run
    data.pw_dirichlet = lambda p, t: np.full(p.shape[0], 194970.0)
    data.po_dirichlet = lambda p, t: np.full(p.shape[0], 200000.0)
    state = s.initialize(
        lambda p: np.full(p.shape[0], PW0),
        lambda p: np.full(p.shape[0], PO0),
        lambda p: np.zeros((p.shape[0], 3)),
    )
    state = s.startup_step(state)
    for _ in range(3):
        state = s.step(state)
        sat = truncated_saturation(
            state.pw.coefs, state.po.coefs, s.material.p_d[:, None], 1e-8
        )
        assert np.all((sat >= 1e-8) & (sat <= 1.0 - 1e-8))


def test_solver_failure_reports_substep():
    s = mcwhorter_like_setup()
    from porodg.linsolve import SolverConfig

    s.solver_config = SolverConfig(abs_tol=1e-30, max_iterations=1, restart=1)
    state = s.initialize(
        lambda p: np.full(p.shape[0], PW0),
        lambda p: np.full(p.shape[0], PO0 + 1000.0 * 0),
        lambda p: np.zeros((p.shape[0], 3)),
    )
    # make the state non-steady so the first solve actually iterates
    s.data.pw_dirichlet = lambda p, t: np.full(p.shape[0], 194970.0)
    from porodg.errors import ConvergenceError

    with pytest.raises(ConvergenceError) as exc:
        s.startup_step(state)
    assert "wetting" in str(exc.value)
    assert "step 1" in str(exc.value)


def test_solve_log_records_substeps():
    s = mcwhorter_like_setup()
    state = s.initialize(
        lambda p: np.full(p.shape[0], PW0),
        lambda p: np.full(p.shape[0], PO0),
        lambda p: np.zeros((p.shape[0], 3)),
    )
    state = s.startup_step(state)
    s.step(state)
    labels = [(r.step, r.substep) for r in s.solve_log]
    assert labels == [
        (1, "wetting"), (1, "nonwetting"), (1, "displacement"),
        (2, "wetting"), (2, "nonwetting"), (2, "displacement"),
    ]
    assert all(r.iterations <= 5 for r in s.solve_log)
