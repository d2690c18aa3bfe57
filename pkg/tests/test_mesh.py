import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracporo.errors import AdmissibilityError, GeometryError, IoError
from fracporo.mesh import (
    NODE_INTERSECTION,
    NODE_SIMPLE,
    NODE_TIP,
    Mesh,
    build_mesh,
    graded_breaks,
    measures,
    read_mesh,
    uniform_breaks,
    validate_admissibility,
    write_mesh,
)


def test_areas_sum_to_domain(unit_mesh, cross_mesh):
    assert unit_mesh.area.sum() == pytest.approx(1.0, rel=1e-14)
    assert cross_mesh.total_area() == pytest.approx(1.0, rel=1e-14)


def test_cells_counter_clockwise(cross_mesh):
    v = cross_mesh.vertices[cross_mesh.cells]
    a, b = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    signed = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    assert np.all(signed > 0)


def test_criss_cross_is_admissible(cross_mesh):
    report = validate_admissibility(cross_mesh)
    assert report.ok
    assert report.max_defect <= 1e-12


def test_fracture_topology(cross_mesh):
    kinds = dict(zip(cross_mesh.fracture_nodes.tolist(), cross_mesh.fracture_node_kind.tolist()))
    centre = cross_mesh.find_vertex((0.5, 0.5))
    assert kinds[centre] == NODE_INTERSECTION
    assert sum(k == NODE_TIP for k in kinds.values()) == 4
    assert sum(k == NODE_SIMPLE for k in kinds.values()) == 4
    assert cross_mesh.n_faces == 8


def test_fracture_sides_are_opposite(cross_mesh):
    plus, minus = cross_mesh.fracture_sides.T
    assert np.all(plus != minus)
    mid = cross_mesh.edge_midpoint[cross_mesh.fracture_edges]
    n = cross_mesh.fracture_normal
    # the + cell lies on the side opposite to its outward normal
    assert np.all(np.einsum("ij,ij->i", cross_mesh.centroid[plus] - mid, n) < 0)
    assert np.all(np.einsum("ij,ij->i", cross_mesh.centroid[minus] - mid, n) > 0)


def test_interior_edges_have_two_cells(cross_mesh):
    interior = cross_mesh.boundary_side < 0
    assert np.all(cross_mesh.edge_cells[interior, 1] >= 0)
    assert np.all(cross_mesh.edge_cells[~interior, 1] < 0)


def test_axisymmetric_measures_weight_by_radius():
    b = uniform_breaks(1.0, 2.0, 0.5)
    mesh = build_mesh((0.0, 1.0, 1.0, 2.0), (), x_breaks=uniform_breaks(0.0, 1.0, 0.5), y_breaks=b)
    vol, _ = measures(mesh, axisymmetric=True)
    # volume of the annulus 1 <= r <= 2 over a unit length
    assert vol.sum() == pytest.approx(np.pi * (4.0 - 1.0), rel=1e-12)


def test_axisymmetric_needs_positive_radius(unit_mesh):
    with pytest.raises(GeometryError):
        measures(unit_mesh, axisymmetric=True)


def test_unresolved_fracture_is_rejected():
    b = uniform_breaks(0.0, 1.0, 0.25)
    with pytest.raises(AdmissibilityError):
        build_mesh((0.0, 1.0, 0.0, 1.0), (((0.1, 0.5), (0.6, 0.5)),), x_breaks=b, y_breaks=b)


@pytest.mark.parametrize(
    "fractures",
    [
        (((0.5, 0.5), (1.5, 0.5)),),
        (((0.0, 0.0), (1.0, 0.0)),),
        (((0.2, 0.2), (0.2, 0.2)),),
        (((0.25, 0.5), (0.75, 0.5)), ((0.5, 0.25), (0.5, 0.75))),
    ],
    ids=["outside", "on_boundary", "zero_length", "interior_crossing"],
)
def test_bad_fracture_geometry(fractures):
    b = uniform_breaks(0.0, 1.0, 0.25)
    with pytest.raises(GeometryError):
        build_mesh((0.0, 1.0, 0.0, 1.0), fractures, x_breaks=b, y_breaks=b)


def test_degenerate_triangle_rejected():
    with pytest.raises(GeometryError):
        Mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_round_trip(tmp_path, cross_mesh):
    path = tmp_path / "m.txt"
    write_mesh(cross_mesh, path)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.vertices, cross_mesh.vertices)
    np.testing.assert_array_equal(back.cells, cross_mesh.cells)
    np.testing.assert_array_equal(back.fracture_edges, cross_mesh.fracture_edges)
    np.testing.assert_array_equal(back.center, cross_mesh.center)


def test_read_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("hello\n")
    with pytest.raises(IoError):
        read_mesh(path)


def test_graded_breaks_keep_fine_zone():
    b = graded_breaks(0.0, 100.0, 40.0, 60.0, 2.5, growth=1.3, h_max=10.0)
    assert b[0] == 0.0 and b[-1] == 100.0
    assert np.all(np.diff(b) > 0)
    inside = b[(b >= 40.0) & (b <= 60.0)]
    np.testing.assert_allclose(np.diff(inside), 2.5)
    assert np.diff(b).max() <= 10.0 + 1e-12


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 12), m=st.integers(2, 12))
def test_uniform_criss_cross_admissible(n, m):
    mesh = build_mesh((0.0, 1.0, 0.0, 2.0), (), x_breaks=np.linspace(0, 1, n + 1), y_breaks=np.linspace(0, 2, m + 1))
    assert validate_admissibility(mesh).ok
    assert mesh.area.sum() == pytest.approx(2.0, rel=1e-12)
    # each edge is shared by at most two cells and Euler's formula holds
    assert mesh.n_vertices - mesh.n_edges + mesh.n_cells == 1
