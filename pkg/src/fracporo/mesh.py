"""Admissible triangular meshes with embedded fracture edges.

The structured generator splits every rectangle of a tensor-product grid into
four triangles through its center vertex (criss-cross pattern). Cell centers
are placed on the symmetry axes of each rectangle so that, for every pair of
neighbouring cells, the segment joining their centers is orthogonal to the
shared edge, which is what the two-point flux approximation needs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, GeometryError, IoError

__all__ = [
    "Mesh",
    "AdmissibilityReport",
    "build_mesh",
    "graded_breaks",
    "uniform_breaks",
    "validate_admissibility",
    "measures",
    "write_mesh",
    "read_mesh",
    "BOUNDARY_SIDES",
    "NODE_SIMPLE",
    "NODE_INTERSECTION",
    "NODE_TIP",
    "NODE_BOUNDARY",
]

BOUNDARY_SIDES = ("left", "right", "bottom", "top")
NODE_SIMPLE, NODE_INTERSECTION, NODE_TIP, NODE_BOUNDARY = 0, 1, 2, 3
NODE_KIND_NAMES = ("simple", "intersection", "tip", "boundary")

_ANGLE_TOL = 1e-10


class Mesh:
    """Triangular mesh with fracture edges and TPFA metadata.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counter-clockwise
    area, centroid, center
        Cell areas, centroids and TPFA cell centers.
    edges : (ne, 2) int array
        Sorted vertex pairs.
    edge_length, edge_midpoint
    edge_point : (ne, 2) float array
        TPFA face point: foot of the perpendicular from the center of the
        first incident cell onto the edge line.
    edge_cells : (ne, 2) int array
        Incident cells; the second entry is -1 on the boundary.
    edge_local : (ne, 2) int array
        Local edge index of the edge in each incident cell.
    cell_edges : (nc, 3) int array
        ``cell_edges[k, i]`` joins local vertices ``i`` and ``(i + 1) % 3``.
    cell_normals : (nc, 3, 2) float array
        Outward unit normals.
    cell_edge_distances : (nc, 3) float array
        Signed distance from the cell center to each edge line.
    fracture_edges : (nf,) int array
        Edge ids of the fracture faces, in face order.
    fracture_sides : (nf, 2) int array
        Cells on the ``+`` and ``-`` sides of each face.
    fracture_normal : (nf, 2) float array
        ``n+``, the outward normal of the ``+`` cell.
    fracture_nodes : (nn,) int array
        Vertex ids of the fracture network nodes.
    fracture_node_kind : (nn,) int array
        One of ``NODE_SIMPLE``, ``NODE_INTERSECTION``, ``NODE_TIP``,
        ``NODE_BOUNDARY``.
    boundary_side : (ne,) int array
        Index into ``BOUNDARY_SIDES`` for boundary edges of the bounding box,
        4 for other boundary edges and -1 for interior edges.
    """

    def __init__(self, vertices, cells, centers=None, fracture_edges=(), domain=None):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise GeometryError("vertices must be an (n, 2) array")
        p0, p1, p2 = (vertices[cells[:, i]] for i in range(3))
        signed = 0.5 * _cross(p1 - p0, p2 - p0)
        if np.any(np.abs(signed) <= 0):
            raise GeometryError("degenerate triangle")
        flip = signed < 0
        if np.any(flip):
            cells[flip] = cells[flip][:, [0, 2, 1]]
            if centers is not None:
                centers = np.asarray(centers, dtype=float)
        self.vertices = vertices
        self.cells = cells
        self.area = np.abs(signed)
        self.centroid = vertices[cells].mean(axis=1)
        self.center = (
            _circumcenters(vertices, cells)
            if centers is None
            else np.ascontiguousarray(centers, dtype=float).reshape(-1, 2)
        )
        if self.center.shape != self.centroid.shape:
            raise GeometryError("one center per cell is required")
        if domain is None:
            lo, hi = vertices.min(axis=0), vertices.max(axis=0)
            domain = (lo[0], hi[0], lo[1], hi[1])
        self.domain = tuple(float(v) for v in domain)
        self._build_edges()
        self._build_fractures(fracture_edges)

    # -- construction -------------------------------------------------

    def _build_edges(self):
        nv = len(self.vertices)
        cells = self.cells
        a = cells
        b = np.roll(cells, -1, axis=1)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = (lo * nv + hi).ravel()
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.edges = np.stack([uniq // nv, uniq % nv], axis=1)
        self.cell_edges = inverse.reshape(-1, 3)
        ne = len(uniq)
        counts = np.bincount(inverse, minlength=ne)
        if np.any(counts > 2):
            raise GeometryError("non-manifold edge shared by more than two cells")
        edge_cells = -np.ones((ne, 2), dtype=np.int64)
        edge_local = -np.ones((ne, 2), dtype=np.int64)
        flat_cells = np.repeat(np.arange(len(cells)), 3)
        flat_local = np.tile(np.arange(3), len(cells))
        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        slot = np.where(first, 0, 1)
        edge_cells[inverse[order], slot] = flat_cells[order]
        edge_local[inverse[order], slot] = flat_local[order]
        self.edge_cells = edge_cells
        self.edge_local = edge_local

        va, vb = self.vertices[self.edges[:, 0]], self.vertices[self.edges[:, 1]]
        self.edge_length = np.hypot(*(vb - va).T)
        self.edge_midpoint = 0.5 * (va + vb)

        ta = self.vertices[a]
        tb = self.vertices[b]
        tang = tb - ta
        length = np.hypot(tang[..., 0], tang[..., 1])
        self.cell_normals = np.stack([tang[..., 1], -tang[..., 0]], axis=-1) / length[..., None]
        mid = 0.5 * (ta + tb)
        self.cell_edge_distances = np.einsum(
            "kij,kij->ki", mid - self.center[:, None, :], self.cell_normals
        )

        tvec = vb - va
        c0 = self.center[edge_cells[:, 0]]
        t = ((c0 - va) * tvec).sum(1) / (tvec * tvec).sum(1)
        self.edge_point = va + t[:, None] * tvec

        boundary = edge_cells[:, 1] < 0
        side = -np.ones(ne, dtype=np.int64)
        x0, x1, y0, y1 = self.domain
        mid = self.edge_midpoint
        scale = max(x1 - x0, y1 - y0)
        tol = 1e-9 * scale
        tags = [
            np.abs(mid[:, 0] - x0) < tol,
            np.abs(mid[:, 0] - x1) < tol,
            np.abs(mid[:, 1] - y0) < tol,
            np.abs(mid[:, 1] - y1) < tol,
        ]
        side[boundary] = 4
        for i, t in enumerate(tags):
            side[boundary & t & (side == 4)] = i
        self.boundary_side = side
        self.boundary_vertex = np.zeros(nv, dtype=bool)
        self.boundary_vertex[self.edges[boundary].ravel()] = True

    def _build_fractures(self, fracture_edges):
        fe = np.asarray(fracture_edges, dtype=np.int64).reshape(-1)
        if len(np.unique(fe)) != len(fe):
            raise GeometryError("duplicated fracture edge")
        if len(fe) and np.any(self.edge_cells[fe, 1] < 0):
            raise GeometryError("fracture edges must not lie on the domain boundary")
        self.fracture_edges = fe
        self.is_fracture_edge = np.zeros(len(self.edges), dtype=bool)
        self.is_fracture_edge[fe] = True
        self.fracture_sides = self.edge_cells[fe].copy()
        local_plus = self.edge_local[fe, 0]
        self.fracture_normal = self.cell_normals[self.fracture_sides[:, 0], local_plus]
        self.face_index = -np.ones(len(self.edges), dtype=np.int64)
        self.face_index[fe] = np.arange(len(fe))

        verts = self.edges[fe].ravel()
        nodes, counts = np.unique(verts, return_counts=True)
        kind = np.full(len(nodes), NODE_SIMPLE, dtype=np.int64)
        kind[counts >= 3] = NODE_INTERSECTION
        kind[counts == 1] = NODE_TIP
        kind[self.boundary_vertex[nodes]] = NODE_BOUNDARY
        self.fracture_nodes = nodes
        self.fracture_node_kind = kind
        self.fracture_node_degree = counts

    # -- queries ------------------------------------------------------

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.fracture_edges)

    def node_kind(self, vertex):
        """Kind name of a fracture node given by vertex id."""
        i = np.searchsorted(self.fracture_nodes, vertex)
        if i >= len(self.fracture_nodes) or self.fracture_nodes[i] != vertex:
            raise KeyError(f"vertex {vertex} is not a fracture node")
        return NODE_KIND_NAMES[self.fracture_node_kind[i]]

    def find_vertex(self, point, tol=1e-9):
        """Id of the vertex at ``point``."""
        d = np.hypot(*(self.vertices - np.asarray(point, dtype=float)).T)
        i = int(np.argmin(d))
        if d[i] > tol * max(1.0, np.ptp(self.vertices)):
            raise KeyError(f"no vertex at {point}")
        return i

    def node_faces(self):
        """Map fracture-node vertex id to the list of incident face ids."""
        out = {int(v): [] for v in self.fracture_nodes}
        for f, e in enumerate(self.fracture_edges):
            for v in self.edges[e]:
                out[int(v)].append(f)
        return out

    def total_area(self):
        return float(self.area.sum())


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _circumcenters(vertices, cells):
    a, b, c = (vertices[cells[:, i]] for i in range(3))
    ba, ca = b - a, c - a
    d = 2.0 * _cross(ba, ca)
    nb, nc = (ba**2).sum(1), (ca**2).sum(1)
    ux = (ca[:, 1] * nb - ba[:, 1] * nc) / d
    uy = (ba[:, 0] * nc - ca[:, 0] * nb) / d
    return a + np.stack([ux, uy], axis=1)


# -- admissibility ----------------------------------------------------


@dataclass(frozen=True)
class AdmissibilityReport:
    """Worst orthogonality defect (rad) and smallest center-edge distance (m)."""

    max_defect: float
    min_distance: float
    ok: bool


def validate_admissibility(mesh: Mesh, tol: float = _ANGLE_TOL) -> AdmissibilityReport:
    """Check TPFA orthogonality of every (cell, edge) incidence.

    For every interior edge the segment joining the two cell centers must be
    parallel to the edge normal. For boundary and fracture edges the closest
    point of the edge to the cell center must also lie along the normal,
    i.e. the face point must fall inside the edge.
    """
    nc = mesh.n_cells
    cells = np.repeat(np.arange(nc), 3)
    local = np.tile(np.arange(3), nc)
    edge = mesh.cell_edges.ravel()
    normal = mesh.cell_normals.reshape(-1, 2)
    ec = mesh.edge_cells[edge]
    other = np.where(ec[:, 0] == cells, ec[:, 1], ec[:, 0])
    center = mesh.center[cells]

    def defect(vec):
        return np.arctan2(np.abs(_cross(vec, normal)), (vec * normal).sum(1))

    angle = np.where(other >= 0, defect(mesh.center[np.maximum(other, 0)] - center), 0.0)
    needs_point = (other < 0) | mesh.is_fracture_edge[edge]
    va = mesh.vertices[mesh.edges[edge, 0]]
    vb = mesh.vertices[mesh.edges[edge, 1]]
    tvec = vb - va
    t = np.clip(((center - va) * tvec).sum(1) / (tvec * tvec).sum(1), 0.0, 1.0)
    closest = va + t[:, None] * tvec
    angle = np.where(needs_point, np.maximum(angle, defect(closest - center)), angle)
    dist = mesh.cell_edge_distances[cells, local]
    max_defect = float(angle.max()) if len(angle) else 0.0
    min_distance = float(dist.min()) if len(dist) else np.inf
    return AdmissibilityReport(max_defect, min_distance, bool(max_defect <= tol and min_distance > 0))


# -- structured generation ---------------------------------------------


def uniform_breaks(a, b, h):
    """Equally spaced breakpoints on [a, b] with spacing at most ``h``."""
    n = max(1, int(np.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, n + 1)


def _graded_run(length, h, growth, h_max):
    sizes = []
    k = 1
    while sum(sizes) < length * (1 - 1e-12):
        sizes.append(min(h * growth**k, h_max))
        k += 1
    sizes = np.array(sizes)
    return np.cumsum(sizes * (length / sizes.sum()))


def graded_breaks(a, b, fine_lo, fine_hi, h, growth=1.3, h_max=None):
    """Breakpoints uniform with spacing ``h`` on [fine_lo, fine_hi] and
    geometrically coarsened towards ``a`` and ``b``.

    ``fine_hi - fine_lo`` must be a multiple of ``h``.
    """
    if not a <= fine_lo < fine_hi <= b:
        raise GeometryError("fine zone must lie inside [a, b]")
    n = (fine_hi - fine_lo) / h
    if abs(n - round(n)) > 1e-9:
        raise GeometryError("fine zone length must be a multiple of h")
    h_max = np.inf if h_max is None else h_max
    fine = np.linspace(fine_lo, fine_hi, int(round(n)) + 1)
    left = fine_lo - _graded_run(fine_lo - a, h, growth, h_max)[::-1] if fine_lo > a else []
    right = fine_hi + _graded_run(b - fine_hi, h, growth, h_max) if fine_hi < b else []
    out = np.concatenate([np.asarray(left, float), fine, np.asarray(right, float)])
    out[0], out[-1] = a, b
    return out


def _rectangle(domain):
    arr = np.asarray(domain, dtype=float)
    if arr.shape == (4,):
        x0, x1, y0, y1 = arr
    elif arr.ndim == 2 and arr.shape[1] == 2:
        xs, ys = arr[:, 0], arr[:, 1]
        x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
        on_box = (np.isclose(xs, x0) | np.isclose(xs, x1)) & (np.isclose(ys, y0) | np.isclose(ys, y1))
        if len(arr) != 4 or not on_box.all():
            raise GeometryError("only axis-aligned rectangular domains are supported")
    else:
        raise GeometryError("domain must be (x0, x1, y0, y1) or a rectangle polygon")
    if not (x1 > x0 and y1 > y0):
        raise GeometryError("empty domain")
    return float(x0), float(x1), float(y0), float(y1)


def _segments(fractures):
    segs = []
    for fid, line in enumerate(fractures):
        pts = np.asarray(line, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise GeometryError(f"fracture {fid} must be a polyline with >= 2 points")
        for p, q in zip(pts[:-1], pts[1:]):
            if np.hypot(*(q - p)) <= 0:
                raise GeometryError(f"fracture {fid} has a zero-length segment")
            segs.append((fid, p, q))
    return segs


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _check_segments(segs, rect):
    x0, x1, y0, y1 = rect
    scale = max(x1 - x0, y1 - y0)
    eps = 1e-9 * scale
    for fid, p, q in segs:
        for pt in (p, q):
            if not (x0 - eps <= pt[0] <= x1 + eps and y0 - eps <= pt[1] <= y1 + eps):
                raise GeometryError(f"fracture {fid} leaves the domain at {tuple(pt)}")
        for c in (0, 1):
            lo, hi = (x0, x1) if c == 0 else (y0, y1)
            for wall in (lo, hi):
                if abs(p[c] - wall) < eps and abs(q[c] - wall) < eps:
                    raise GeometryError(f"fracture {fid} runs along the domain boundary")
    for i in range(len(segs)):
        _, p1, q1 = segs[i]
        len1 = np.hypot(*(q1 - p1))
        for j in range(i + 1, len(segs)):
            _, p2, q2 = segs[j]
            len2 = np.hypot(*(q2 - p2))
            o1 = _orient(p1, q1, p2) / len1
            o2 = _orient(p1, q1, q2) / len1
            o3 = _orient(p2, q2, p1) / len2
            o4 = _orient(p2, q2, q1) / len2
            if abs(o1) < eps and abs(o2) < eps:
                # collinear: overlap of positive length is forbidden
                d = (q1 - p1) / len1
                t = sorted([(p2 - p1) @ d, (q2 - p1) @ d])
                if min(t[1], len1) - max(t[0], 0.0) > eps:
                    raise GeometryError("overlapping fracture segments")
                continue
            if o1 * o2 < 0 and abs(o1) > eps and abs(o2) > eps and o3 * o4 < 0 and abs(o3) > eps and abs(o4) > eps:
                raise GeometryError(
                    f"fractures cross in their interiors near "
                    f"{tuple(np.round(p1 + (q1 - p1) * o3 / (o3 - o4), 6))}"
                )


def _criss_cross(xb, yb):
    nx, ny = len(xb) - 1, len(yb) - 1
    X, Y = np.meshgrid(xb, yb, indexing="ij")
    corners = np.stack([X.ravel(), Y.ravel()], axis=1)
    cx = 0.5 * (xb[:-1] + xb[1:])
    cy = 0.5 * (yb[:-1] + yb[1:])
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    mids = np.stack([CX.ravel(), CY.ravel()], axis=1)
    vertices = np.concatenate([corners, mids])
    nc0 = len(corners)

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I, J = I.ravel(), J.ravel()

    def cid(i, j):
        return i * (ny + 1) + j

    c00, c10, c11, c01 = cid(I, J), cid(I + 1, J), cid(I + 1, J + 1), cid(I, J + 1)
    m = nc0 + I * ny + J
    tris = np.stack(
        [
            np.stack([c00, c10, m], 1),
            np.stack([c10, c11, m], 1),
            np.stack([c11, c01, m], 1),
            np.stack([c01, c00, m], 1),
        ],
        axis=1,
    ).reshape(-1, 3)

    w = (xb[1:] - xb[:-1])[I]
    h = (yb[1:] - yb[:-1])[J]
    s = 0.5 * np.minimum(h / (2 * w), w / (2 * h))
    t1 = h / 2 - w * s
    t2 = w / 2 - h * s
    x0, x1 = xb[I], xb[I + 1]
    y0, y1 = yb[J], yb[J + 1]
    mx, my = cx[I], cy[J]
    centers = np.stack(
        [
            np.stack([mx, y0 + t1], 1),
            np.stack([x1 - t2, my], 1),
            np.stack([mx, y1 - t1], 1),
            np.stack([x0 + t2, my], 1),
        ],
        axis=1,
    ).reshape(-1, 2)
    return vertices, tris, centers


def _map_segments(vertices, edges, segs, scale):
    tol = 1e-9 * scale
    va, vb = vertices[edges[:, 0]], vertices[edges[:, 1]]
    ids = []
    for fid, p, q in segs:
        d = q - p
        length = np.hypot(*d)
        u = d / length
        da = _cross(va - p, np.broadcast_to(u, va.shape))
        db = _cross(vb - p, np.broadcast_to(u, vb.shape))
        ta = (va - p) @ u
        tb = (vb - p) @ u
        on = (
            (np.abs(da) < tol)
            & (np.abs(db) < tol)
            & (np.minimum(ta, tb) > -tol)
            & (np.maximum(ta, tb) < length + tol)
        )
        hit = np.flatnonzero(on)
        covered = np.abs(tb[hit] - ta[hit]).sum()
        if abs(covered - length) > 1e-7 * length:
            raise AdmissibilityError(
                f"fracture {fid} segment {p.tolist()}-{q.tolist()} is not resolved by mesh edges"
            )
        order = np.argsort(np.minimum(ta[hit], tb[hit]), kind="stable")
        ids.extend(int(e) for e in hit[order])
    seen = set()
    out = []
    for e in ids:
        if e not in seen:
            seen.add(e)
            out.append(e)
    return np.array(out, dtype=np.int64)


def build_mesh(domain, fractures=(), target_h=None, x_breaks=None, y_breaks=None) -> Mesh:
    """Generate a criss-cross mesh of a rectangle conforming to fractures.

    Parameters
    ----------
    domain : sequence
        ``(x0, x1, y0, y1)`` or the four corners of an axis-aligned rectangle.
    fractures : sequence of polylines
        Each polyline is a sequence of at least two points.
    target_h : float, optional
        Maximum grid spacing when breakpoints are generated.
    x_breaks, y_breaks : array_like, optional
        Explicit grid lines. When omitted, the domain bounds and fracture
        vertex coordinates are used as grid lines and gaps are subdivided
        uniformly to spacing ``target_h``.

    Returns
    -------
    Mesh

    Raises
    ------
    GeometryError
        If fractures cross in their interiors, overlap or leave the domain.
    AdmissibilityError
        If a fracture segment is not a union of mesh edges.
    """
    rect = _rectangle(domain)
    x0, x1, y0, y1 = rect
    segs = _segments(fractures)
    _check_segments(segs, rect)
    if (x_breaks is None or y_breaks is None) and target_h is None:
        raise ValueError("target_h is required when breakpoints are not given")

    def breaks(lo, hi, given, coord):
        if given is not None:
            arr = np.asarray(given, dtype=float)
            if arr[0] != lo or arr[-1] != hi or np.any(np.diff(arr) <= 0):
                raise GeometryError("breakpoints must increase from the domain bounds")
            return arr
        keys = {lo, hi}
        for _, p, q in segs:
            keys.update((float(p[coord]), float(q[coord])))
        keys = np.array(sorted(keys))
        keys = keys[np.concatenate([[True], np.diff(keys) > 1e-12 * (hi - lo)])]
        parts = [uniform_breaks(a, b, target_h)[:-1] for a, b in zip(keys[:-1], keys[1:])]
        return np.concatenate(parts + [[hi]])

    xb = breaks(x0, x1, x_breaks, 0)
    yb = breaks(y0, y1, y_breaks, 1)
    vertices, tris, centers = _criss_cross(xb, yb)
    mesh = Mesh(vertices, tris, centers=centers, domain=rect)
    fe = _map_segments(mesh.vertices, mesh.edges, segs, max(x1 - x0, y1 - y0))
    mesh._build_fractures(fe)
    mesh.x_breaks, mesh.y_breaks = xb, yb
    report = validate_admissibility(mesh)
    if not report.ok:
        raise AdmissibilityError(
            f"generated mesh is not admissible (defect {report.max_defect:.3g}, "
            f"min distance {report.min_distance:.3g})"
        )
    return mesh


# -- measures ---------------------------------------------------------


def measures(mesh: Mesh, axisymmetric: bool = False):
    """Cell volumes and edge measures, weighted by ``2 pi r`` if axisymmetric.

    The radial coordinate is ``y``; it is evaluated at cell centroids and edge
    midpoints.
    """
    if not axisymmetric:
        return mesh.area.copy(), mesh.edge_length.copy()
    r_cell = mesh.centroid[:, 1]
    r_edge = mesh.edge_midpoint[:, 1]
    if np.any(r_cell <= 0) or np.any(r_edge <= 0):
        raise GeometryError("axisymmetric meshes must lie in r > 0")
    return 2 * np.pi * r_cell * mesh.area, 2 * np.pi * r_edge * mesh.edge_length


# -- text format ------------------------------------------------------

_HEADER = "# fracporo-mesh 1"


def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format.

    Layout (whitespace separated, one record per line)::

        # fracporo-mesh 1
        domain x0 x1 y0 y1
        vertices NV
        x y                      (NV lines)
        triangles NC
        i j k                    (NC lines, 0-based vertex ids)
        centers NC
        x y                      (NC lines, TPFA cell centers)
        fracture_edges NF
        i j                      (NF lines, 0-based vertex ids)
    """
    lines = [_HEADER, "domain " + " ".join(repr(float(v)) for v in mesh.domain)]
    lines.append(f"vertices {mesh.n_vertices}")
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_cells}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.cells.tolist()]
    lines.append(f"centers {mesh.n_cells}")
    lines += [f"{x!r} {y!r}" for x, y in mesh.center.tolist()]
    lines.append(f"fracture_edges {mesh.n_faces}")
    lines += [f"{a} {b}" for a, b in mesh.edges[mesh.fracture_edges].tolist()]
    _atomic_write(path, "\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    """Read the format produced by :func:`write_mesh`.

    The ``centers`` and ``domain`` sections are optional; circumcenters are
    used when centers are absent.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if not raw or raw[0].strip() != _HEADER:
        raise IoError(f"{path}: missing '{_HEADER}' header")
    sections = {}
    domain = None
    i = 1
    while i < len(raw):
        line = raw[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "domain":
            domain = tuple(float(v) for v in parts[1:5])
            continue
        name, count = parts[0], int(parts[1])
        rows = [raw[i + k].split() for k in range(count)]
        i += count
        sections[name] = rows
    for need in ("vertices", "triangles"):
        if need not in sections:
            raise IoError(f"{path}: missing section '{need}'")
    vertices = np.array(sections["vertices"], dtype=float).reshape(-1, 2)
    cells = np.array(sections["triangles"], dtype=np.int64).reshape(-1, 3)
    centers = np.array(sections["centers"], dtype=float).reshape(-1, 2) if "centers" in sections else None
    mesh = Mesh(vertices, cells, centers=centers, domain=domain)
    pairs = np.array(sections.get("fracture_edges", []), dtype=np.int64).reshape(-1, 2)
    if len(pairs):
        nv = mesh.n_vertices
        keys = np.minimum(pairs[:, 0], pairs[:, 1]) * nv + np.maximum(pairs[:, 0], pairs[:, 1])
        ekeys = mesh.edges[:, 0] * nv + mesh.edges[:, 1]
        pos = np.searchsorted(ekeys, keys)
        if np.any(pos >= len(ekeys)) or np.any(ekeys[np.minimum(pos, len(ekeys) - 1)] != keys):
            raise IoError(f"{path}: fracture edge is not a mesh edge")
        mesh._build_fractures(pos)
    return mesh


def _atomic_write(path, text):
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
