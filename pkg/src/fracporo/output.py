"""Run outputs: CSV time series, legacy VTK snapshots and a text report.

Files written by :func:`write_outputs` into the output directory:

``series.csv``
    Header ``t,mean_s_nw_matrix,mean_s_nw_fracture,mean_aperture,...``
    followed by one row per accepted state (the initial state first).
    UTF-8, comma separated, ``\\n`` line ends, numbers written with
    Python's ``repr`` (shortest round-trip decimal, ``.`` separator).
``diagnostics.csv``
    Same conventions; one row per diagnostic record.
``matrix_NNN.vtk``
    Legacy ASCII VTK 3.0 ``UNSTRUCTURED_GRID`` of the triangles (``z = 0``,
    cell type 5) with ``CELL_DATA`` scalars ``s_nw``, ``p_nw``, ``p_w``,
    ``p_E``, ``phi``, ``sigma_xx``, ``sigma_yy``, ``sigma_zz``, ``sigma_xy``.
``fractures_NNN.vtk``
    Legacy ASCII VTK 3.0 ``POLYDATA`` with one ``LINES`` entry per fracture
    face and ``CELL_DATA`` scalars ``s_nw``, ``p_nw``, ``p_w``, ``d_f``.
    Written only when the mesh has fractures.
``report.txt``
    ``key = value`` lines: scenario, model, mesh sizes, solver counters
    (``N_dt``, ``N_Chops``, ``N_Newton``, ``N_GMRes``, ``N_GMRes_NK``,
    ``N_NK``, ``CPU`` in seconds), completion status and final balances.

The second line of each VTK file is ``fracporo <kind> t=<repr(t)>``.
Every file is written to a temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .diagnostics import COLUMNS
from .errors import IoError
from .mesh import Mesh
from .scenarios import SERIES_COLUMNS, RunResult, Snapshot

__all__ = [
    "write_outputs",
    "atomic_write",
    "csv_text",
    "vtk_matrix_text",
    "vtk_fracture_text",
    "report_text",
    "read_csv",
]

CELL_FIELDS = ("s_nw", "p_nw", "p_w", "p_E", "phi", "sigma_xx", "sigma_yy", "sigma_zz", "sigma_xy")
FACE_FIELDS = ("s_nw", "p_nw", "p_w", "d_f")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _num(v) -> str:
    return repr(float(v))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def read_csv(path):
    """Header and float rows of a CSV written by this module."""
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows).reshape(-1, len(header))


def _scalars(name, values):
    lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [_num(v) for v in values]
    return lines


def vtk_matrix_text(mesh: Mesh, snap: Snapshot) -> str:
    nv, nc = mesh.n_vertices, mesh.n_cells
    out = ["# vtk DataFile Version 3.0", f"fracporo matrix t={snap.t!r}", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {nv} double")
    out += [f"{_num(x)} {_num(y)} 0.0" for x, y in mesh.vertices]
    out.append(f"CELLS {nc} {4 * nc}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    out.append(f"CELL_TYPES {nc}")
    out += ["5"] * nc
    out.append(f"CELL_DATA {nc}")
    for name in CELL_FIELDS:
        out += _scalars(name, snap.cell[name])
    return "\n".join(out) + "\n"


def vtk_fracture_text(mesh: Mesh, snap: Snapshot) -> str:
    nf = mesh.n_faces
    edges = mesh.edges[mesh.fracture_edges]
    verts = np.unique(edges)
    local = {int(v): i for i, v in enumerate(verts)}
    out = ["# vtk DataFile Version 3.0", f"fracporo fractures t={snap.t!r}", "ASCII", "DATASET POLYDATA"]
    out.append(f"POINTS {len(verts)} double")
    out += [f"{_num(x)} {_num(y)} 0.0" for x, y in mesh.vertices[verts]]
    out.append(f"LINES {nf} {3 * nf}")
    out += [f"2 {local[int(a)]} {local[int(b)]}" for a, b in edges]
    out.append(f"CELL_DATA {nf}")
    for name in FACE_FIELDS:
        out += _scalars(name, snap.face[name])
    return "\n".join(out) + "\n"


def report_text(result: RunResult) -> str:
    sc = result.scenario
    pb = result.problem
    last = result.log.last
    lines = [
        f"scenario = {sc.name}",
        f"mode = {sc.mode}",
        f"model = {sc.model}",
        f"refine = {result.refine}",
        f"cells = {pb.mesh.n_cells}",
        f"fracture_faces = {pb.mesh.n_faces}",
        f"flow_unknowns = {pb.flow.dofs.n_unknowns}",
        f"mech_unknowns = {pb.mech.dofs.n_dofs}",
        f"completed = {str(result.completed).lower()}",
        f"t_final = {result.state.t!r}",
        f"schedule_steps = {sc.step_schedule()}",
    ]
    for key, value in result.counters.items():
        lines.append(f"{key} = {value!r}" if key == "CPU" else f"{key} = {int(value)}")
    for key in ("mass_nw", "mass_w", "injected_nw", "injected_w", "dissipation_cum"):
        lines.append(f"{key} = {last[key]!r}")
    for key in ("mass_defect_nw", "mass_defect_w", "chord_min"):
        col = result.log.column(key)
        agg = col.min() if key == "chord_min" else col.max()
        lines.append(f"{'min' if key == 'chord_min' else 'max'}_{key} = {float(agg)!r}")
    return "\n".join(lines) + "\n"


def write_outputs(result: RunResult, out_dir) -> list[Path]:
    """Write all output files of ``result``; returns their paths."""
    out = Path(out_dir)
    written = []

    def put(name, text):
        path = out / name
        atomic_write(path, text)
        written.append(path)

    put("series.csv", csv_text(SERIES_COLUMNS, result.series))
    put("diagnostics.csv", csv_text(COLUMNS, result.log.rows()))
    mesh = result.problem.mesh
    for snap in result.snapshots:
        put(f"matrix_{snap.index:03d}.vtk", vtk_matrix_text(mesh, snap))
        if mesh.n_faces:
            put(f"fractures_{snap.index:03d}.vtk", vtk_fracture_text(mesh, snap))
    put("report.txt", report_text(result))
    return written
