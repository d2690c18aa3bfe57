import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracporo.errors import SingularityError
from fracporo.mech import TRI7_POINTS, TRI7_WEIGHTS, Elasticity, MechBC, p2_shape
from fracporo.mesh import BOUNDARY_SIDES, build_mesh, uniform_breaks
from fracporo.verify import quadratic_patch_test

CLAMPED = {side: MechBC(0.0, 0.0) for side in BOUNDARY_SIDES}


def test_shape_functions_partition_unity():
    N, dN = p2_shape(TRI7_POINTS[:, 0], TRI7_POINTS[:, 1])
    np.testing.assert_allclose(N.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(dN.sum(axis=1), 0.0, atol=1e-13)


def test_shape_functions_nodal():
    nodes = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], dtype=float)
    N, _ = p2_shape(nodes[:, 0], nodes[:, 1])
    np.testing.assert_allclose(N, np.eye(6), atol=1e-14)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4, 5])
def test_seven_point_rule_degree_five(degree):
    # int over the reference triangle of x^degree = degree! / (degree + 2)!
    exact = math.factorial(degree) / math.factorial(degree + 2)
    assert 0.5 * TRI7_WEIGHTS @ TRI7_POINTS[:, 0] ** degree == pytest.approx(exact, rel=1e-13)


def test_stiffness_symmetric_with_rigid_kernel(unit_mesh):
    mech = Elasticity(unit_mesh, 2.0, 1.0, bcs=CLAMPED)
    K = mech.K
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    x = mech.dofs.coords
    for mode in (
        np.stack([np.ones(len(x)), np.zeros(len(x))], 1),
        np.stack([np.zeros(len(x)), np.ones(len(x))], 1),
        np.stack([-x[:, 1], x[:, 0]], 1),
    ):
        assert np.abs(K @ mode.ravel()).max() <= 1e-10


def test_duplicated_nodes_on_fractures(cross_mesh):
    mech = Elasticity(cross_mesh, 2.0, 1.0, bcs=CLAMPED)
    # one midpoint copy per face, one vertex copy per simple node (2 sectors),
    # three per intersection (4 sectors), none at tips
    assert mech.dofs.n_duplicates == 8 + 4 * 1 + 3
    assert mech.dofs.n_dofs == 2 * (cross_mesh.n_vertices + cross_mesh.n_edges + mech.dofs.n_duplicates)


@pytest.fixture(scope="module")
def split_mesh():
    """Unit square cut into two blocks by the fracture x = 0.5."""
    b = uniform_breaks(0.0, 1.0, 0.25)
    return build_mesh((0.0, 1.0, 0.0, 1.0), (((0.5, 0.0), (0.5, 1.0)),), x_breaks=b, y_breaks=b)


def test_aperture_of_opening_field(split_mesh):
    bcs = {"left": MechBC(0.0, 0.0), "right": MechBC(0.0, 0.0)}
    mech = Elasticity(split_mesh, 2.0, 1.0, bcs=bcs)
    u = np.zeros(mech.dofs.n_dofs)
    # move every + side node of each face by -delta n+
    delta = 1e-3
    for f in range(split_mesh.n_faces):
        n = split_mesh.fracture_normal[f]
        for node in mech.dofs.face_nodes[f, 0]:
            u[2 * node : 2 * node + 2] = -delta * n
    np.testing.assert_allclose(mech.aperture(u), delta, rtol=1e-12)


def test_uniform_pressure_gives_uniform_strain():
    b = uniform_breaks(0.0, 1.0, 0.25)
    mesh = build_mesh((0.0, 1.0, 0.0, 1.0), (), x_breaks=b, y_breaks=b)
    lam, mu = 2.0, 1.0
    bcs = {"left": MechBC(ux=0.0), "bottom": MechBC(uy=0.0)}
    mech = Elasticity(mesh, lam, mu, biot=1.0, bcs=bcs)
    p = 0.3
    u = mech.solve_pressure(np.full(mesh.n_cells, p))
    eps = mech.cell_strain(u)
    # free expansion: sigma = 0 -> (lam + mu) e = p / 2 per direction
    e = p / (2 * (lam + mu))
    np.testing.assert_allclose(eps[:, 0], e, rtol=1e-10)
    np.testing.assert_allclose(eps[:, 1], e, rtol=1e-10)
    np.testing.assert_allclose(mech.total_stress(u, np.full(mesh.n_cells, p))[:, [0, 1, 3]], 0.0, atol=1e-12)


@pytest.mark.parametrize(
    "bcs,message",
    [
        ({}, "translation"),
        ({"left": MechBC(ux=0.0)}, "translation"),
        ({"left": MechBC(ux=0.0), "right": MechBC(ux=0.0), "bottom": MechBC(uy=0.0, ux=None)}, None),
    ],
)
def test_rigid_mode_detection(unit_mesh, bcs, message):
    if message is None:
        Elasticity(unit_mesh, 1.0, 1.0, bcs=bcs)
        return
    with pytest.raises(SingularityError, match=message):
        Elasticity(unit_mesh, 1.0, 1.0, bcs=bcs)


def test_rotation_left_free_is_detected(unit_mesh):
    # x held on the line y = 0 and y held on the line x = 0 leave the rotation free
    with pytest.raises(SingularityError, match="rotation"):
        Elasticity(unit_mesh, 1.0, 1.0, bcs={"bottom": MechBC(ux=0.0), "left": MechBC(uy=0.0)})


def test_floating_block_detected(split_mesh):
    with pytest.raises(SingularityError, match="block"):
        Elasticity(split_mesh, 1.0, 1.0, bcs={"left": MechBC(0.0, 0.0)})


@settings(max_examples=15, deadline=None)
@given(
    coef=st.lists(st.floats(-1, 1, allow_subnormal=False), min_size=12, max_size=12),
    lam=st.floats(0.5, 5),
    mu=st.floats(0.5, 5),
)
def test_quadratic_fields_are_reproduced(coef, lam, mu):
    err = quadratic_patch_test(n=2, lam=lam, mu=mu, coefficients=np.reshape(coef, (2, 6)))
    assert err <= 1e-10
