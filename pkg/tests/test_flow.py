from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from fracporo.flow import (
    NW,
    W,
    FlowClosures,
    FlowDofMap,
    interface_flux,
    matrix_flux,
    single_phase_system,
    tangential_transmissibility,
)
from fracporo.scenarios import build_problem

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_matrix_flux_upwinds():
    assert matrix_flux(2.0, 3.0, 1.0, 5.0, 7.0) == pytest.approx(2.0 * 5.0 * 2.0)
    assert matrix_flux(2.0, 1.0, 3.0, 5.0, 7.0) == pytest.approx(-2.0 * 7.0 * 2.0)


@settings(max_examples=200, deadline=None)
@given(jump=finite, a=st.floats(0, 1e3), b=st.floats(0, 1e3))
def test_interface_flux_dissipates(jump, a, b):
    assert interface_flux(jump, a, b, 1e-9, 0.5) * jump >= 0.0


def test_tangential_transmissibility_harmonic():
    t = tangential_transmissibility(1e-3, 1e-3, 0.5, 0.5)
    assert t == pytest.approx((1e-9 / 12 / 0.5) / 2)
    assert tangential_transmissibility(0.0, 1e-3, 0.5, 0.5) == 0.0


def test_dof_layout():
    d = FlowDofMap(5, 2, 3)
    assert d.n_entities == 5 + 6 + 3
    assert d.n_unknowns == 28
    assert list(d.faces()) == [5, 6]
    assert d.side(1, 0) == 9 and d.side(1, 1) == 10
    assert list(d.nodes()) == [11, 12, 13]
    assert d.unknown(3, W) == 7


def test_tpfa_exact_for_linear_fields(unit_mesh):
    def p(x):
        return 1.0 + 2.0 * x[:, 0] - 3.0 * x[:, 1]

    A, b = single_phase_system(unit_mesh, 2.5, p)
    sol = spla.spsolve(A.tocsc(), b)
    np.testing.assert_allclose(sol, p(unit_mesh.center), atol=1e-12)


@pytest.fixture(scope="module")
def problem(small_gas):
    return build_problem(small_gas)


def _closures(problem):
    st0 = problem.initial_state()
    return st0, FlowClosures(st0.phi_ref, st0.d_f, problem.coupled.pE0)


def test_initial_state_layout(problem):
    flow = problem.flow
    d = flow.dofs
    x = problem.x0.reshape(-1, 2)
    sides = problem.mesh.fracture_sides.ravel()
    np.testing.assert_array_equal(x[d.side0 : d.node0], x[sides])


def test_residual_phase_sums_are_mass_balances(problem):
    flow = problem.flow
    st0, cl = _closures(problem)
    dt = 1e4
    mass_prev = flow.masses(st0.x, cl)
    rng = np.random.default_rng(3)
    x = st0.x + rng.uniform(0, 1e3, st0.x.shape)
    R, _, info = flow.assemble(x, cl, dt, mass_prev)
    R = R.reshape(-1, 2)
    outflow = dt * info["F"][flow.c_is_bc].sum(axis=0)
    expected = info["mass"].sum(axis=0) - mass_prev.sum(axis=0) - dt * flow.source.sum(axis=0) + outflow
    np.testing.assert_allclose(R.sum(axis=0), expected, rtol=1e-9, atol=1e-12 * np.abs(info["mass"]).sum())


def test_jacobian_matches_differences(problem):
    flow = problem.flow
    st0, cl = _closures(problem)
    dt = 1e4
    mass_prev = flow.masses(st0.x, cl)
    rng = np.random.default_rng(4)
    # move every entity away from the p_c = 0 kink
    x = st0.x.reshape(-1, 2).copy()
    x[:, NW] += rng.uniform(1e3, 5e3, len(x))
    x = x.ravel()
    _, _, info = flow.assemble(x, cl, dt, mass_prev, jacobian=False)
    v = rng.standard_normal(x.shape) * 10.0
    h = 1e-4
    Rp, _, _ = flow.assemble(x + h * v, cl, dt, mass_prev, jacobian=False, upwind=info["upwind"])
    Rm, _, _ = flow.assemble(x - h * v, cl, dt, mass_prev, jacobian=False, upwind=info["upwind"])
    flow.saturation_floor, floor = 0.0, flow.saturation_floor
    try:
        _, J0, _ = flow.assemble(x, cl, dt, mass_prev)
    finally:
        flow.saturation_floor = floor
    fd = (Rp - Rm) / (2 * h)
    jv = J0 @ v
    assert np.linalg.norm(jv - fd) <= 1e-6 * np.linalg.norm(jv)


def test_newton_update_limits_and_projects(problem):
    flow = problem.flow
    x = problem.x0.copy()
    n = flow.dofs.n_entities
    dx = np.zeros_like(x).reshape(-1, 2)
    dx[:, NW] = 1e9  # would saturate everything
    dx[: n // 2, NW] = -1e9  # would make p_c negative
    out = flow.newton_update(x, dx.ravel())
    _, _, pc, s, _, _ = flow.entity_state(out)
    assert np.all(pc >= 0)
    assert np.all(s <= 0.2 + 1e-12)


def test_continuous_mode_ties_sides_to_faces(small_gas):
    pb = build_problem(replace(small_gas, model="continuous"))
    flow = pb.flow
    d = flow.dofs
    st0 = pb.initial_state()
    cl = FlowClosures(st0.phi_ref, st0.d_f, pb.coupled.pE0)
    x = st0.x.reshape(-1, 2).copy()
    x[d.side0 : d.node0] += 5.0
    R, _, _ = flow.assemble(x.ravel(), cl, 1.0, flow.masses(st0.x, cl))
    R = R.reshape(-1, 2)
    np.testing.assert_allclose(R[d.side0 : d.node0], 5e-6)


def test_interface_dissipation_nonnegative(problem):
    flow = problem.flow
    st0, cl = _closures(problem)
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = st0.x + rng.uniform(-1e4, 1e4, st0.x.shape)
        assert np.all(flow.interface_dissipation(x, cl) >= 0)
