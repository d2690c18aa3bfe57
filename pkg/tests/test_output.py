import numpy as np
import pytest

from fracporo.errors import IoError
from fracporo.output import CELL_FIELDS, atomic_write, csv_text, read_csv, report_text, vtk_fracture_text, vtk_matrix_text, write_outputs
from fracporo.scenarios import SERIES_COLUMNS


def test_csv_round_trip_is_exact(tmp_path, rng):
    rows = rng.standard_normal((4, 3)) * 1e7
    path = tmp_path / "x.csv"
    atomic_write(path, csv_text(("a", "b", "c"), rows))
    header, back = read_csv(path)
    assert header == ["a", "b", "c"]
    np.testing.assert_array_equal(back, rows)
    assert path.read_bytes().count(b"\r") == 0


def test_atomic_write_leaves_no_temporaries(tmp_path):
    atomic_write(tmp_path / "sub" / "f.txt", "hello")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]


def test_atomic_write_reports_errors(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        atomic_write(blocker / "inner.txt", "x")


def test_vtk_layout(small_run):
    mesh = small_run.problem.mesh
    snap = small_run.snapshots[0]
    text = vtk_matrix_text(mesh, snap).splitlines()
    assert text[0] == "# vtk DataFile Version 3.0"
    assert text[1] == "fracporo matrix t=0.0"
    assert f"CELLS {mesh.n_cells} {4 * mesh.n_cells}" in text
    for name in CELL_FIELDS:
        assert f"SCALARS {name} double 1" in text
    frac = vtk_fracture_text(mesh, snap)
    assert "DATASET POLYDATA" in frac and f"LINES {mesh.n_faces} {3 * mesh.n_faces}" in frac


def test_report_lists_counters(small_run):
    lines = dict(line.split(" = ") for line in report_text(small_run).splitlines())
    assert lines["N_dt"] == "5"
    assert lines["completed"] == "false"
    assert lines["scenario"] == "gas_injection_cross"


def test_write_outputs(tmp_path, small_run):
    paths = write_outputs(small_run, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["diagnostics.csv", "fractures_000.vtk", "matrix_000.vtk", "report.txt", "series.csv"]
    header, rows = read_csv(tmp_path / "series.csv")
    assert tuple(header) == SERIES_COLUMNS and rows.shape == (6, len(SERIES_COLUMNS))
