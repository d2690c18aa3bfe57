"""Quadratic (P2) finite elements for linear elasticity with displacement
jumps across fracture edges.

Nodes are the mesh vertices and edge midpoints. Around a fracture, a vertex
gets one copy per matrix sector (group of incident cells connected through
non-fracture edges) and a fracture edge midpoint gets one copy per side, so
the displacement can jump across every fracture branch. The unknown of
component ``c`` at node ``i`` has index ``2 i + c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

from .errors import LinearSolveError, SingularityError
from .mesh import BOUNDARY_SIDES, Mesh
from .solvers import SparseLU, sparse_lu

__all__ = [
    "MechDofMap",
    "MechBC",
    "Elasticity",
    "TRI6_POINTS",
    "TRI6_WEIGHTS",
    "TRI7_POINTS",
    "TRI7_WEIGHTS",
    "p2_shape",
]

# degree-4 rule, weights sum to 1
_a, _b = 0.445948490915965, 0.091576213509771
TRI6_POINTS = np.array(
    [[_a, _a], [1 - 2 * _a, _a], [_a, 1 - 2 * _a], [_b, _b], [1 - 2 * _b, _b], [_b, 1 - 2 * _b]]
)
TRI6_WEIGHTS = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)

# degree-5 rule
_c1, _c2 = 0.470142064105115, 0.101286507323456
TRI7_POINTS = np.array(
    [
        [1 / 3, 1 / 3],
        [_c1, _c1],
        [1 - 2 * _c1, _c1],
        [_c1, 1 - 2 * _c1],
        [_c2, _c2],
        [1 - 2 * _c2, _c2],
        [_c2, 1 - 2 * _c2],
    ]
)
TRI7_WEIGHTS = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)

# 3-point Gauss on [0, 1]
GAUSS3_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
GAUSS3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def p2_shape(xi, eta):
    """Values and reference gradients of the six P2 shape functions.

    Node order: the three vertices, then the midpoints of edges (0,1), (1,2)
    and (2,0).
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    l0, l1, l2 = 1 - xi - eta, xi, eta
    N = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], -1)
    # d/dxi, d/deta with dl0 = (-1, -1), dl1 = (1, 0), dl2 = (0, 1)
    dxi = np.stack(
        [-(4 * l0 - 1), 4 * l1 - 1, 0 * l2, 4 * (l0 - l1), 4 * l2, -4 * l2], -1
    )
    deta = np.stack(
        [-(4 * l0 - 1), 0 * l1, 4 * l2 - 1, -4 * l1, 4 * l1, 4 * (l0 - l2)], -1
    )
    return N, np.stack([dxi, deta], -1)


def _edge_shape(t):
    """1D quadratic shape functions on [0, 1]: end 0, end 1, midpoint."""
    t = np.asarray(t, dtype=float)
    return np.stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)], -1)


class MechDofMap:
    """Node layout of the P2 space with fracture duplication."""

    def __init__(self, mesh: Mesh):
        nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
        cell_nodes = np.empty((nc, 6), dtype=np.int64)
        cell_nodes[:, :3] = mesh.cells
        cell_nodes[:, 3:] = nv + mesh.cell_edges
        coords = [mesh.vertices, mesh.edge_midpoint]
        origin = list(range(nv + ne))
        next_id = nv + ne
        extra = []

        # vertex copies per matrix sector
        frac_vertices = set(int(v) for v in mesh.fracture_nodes)
        if frac_vertices:
            incident = {v: [] for v in frac_vertices}
            for k, tri in enumerate(mesh.cells):
                for i, v in enumerate(tri):
                    if int(v) in incident:
                        incident[int(v)].append((k, i))
            for v in sorted(frac_vertices):
                inc = incident[v]
                cells = [k for k, _ in inc]
                parent = {k: k for k in cells}

                def find(k):
                    while parent[k] != k:
                        parent[k] = parent[parent[k]]
                        k = parent[k]
                    return k

                for k, i in inc:
                    # the two cell edges touching v are local edges i and i-1
                    for le in (i, (i - 1) % 3):
                        e = mesh.cell_edges[k, le]
                        if mesh.is_fracture_edge[e]:
                            continue
                        for other in mesh.edge_cells[e]:
                            if other >= 0 and other != k and other in parent:
                                ra, rb = find(k), find(other)
                                if ra != rb:
                                    parent[max(ra, rb)] = min(ra, rb)
                roots = sorted(set(find(k) for k in cells))
                ids = {roots[0]: v}
                for r in roots[1:]:
                    ids[r] = next_id
                    extra.append(mesh.vertices[v])
                    origin.append(v)
                    next_id += 1
                for k, i in inc:
                    cell_nodes[k, i] = ids[find(k)]
        # midpoint copies on fracture edges: the minus side gets a new node
        self.face_nodes = np.zeros((mesh.n_faces, 2, 3), dtype=np.int64)
        for f, e in enumerate(mesh.fracture_edges):
            km = mesh.edge_cells[e, 1]
            lm = mesh.edge_local[e, 1]
            cell_nodes[km, 3 + lm] = next_id
            extra.append(mesh.edge_midpoint[e])
            origin.append(nv + e)
            next_id += 1
        for f, e in enumerate(mesh.fracture_edges):
            for a in (0, 1):
                k, le = mesh.edge_cells[e, a], mesh.edge_local[e, a]
                va, vb = cell_nodes[k, le], cell_nodes[k, (le + 1) % 3]
                # order the edge nodes by the sorted vertex pair of the edge
                if mesh.cells[k, le] != mesh.edges[e, 0]:
                    va, vb = vb, va
                self.face_nodes[f, a] = (va, vb, cell_nodes[k, 3 + le])
        self.cell_nodes = cell_nodes
        self.n_nodes = next_id
        self.coords = np.concatenate(coords + ([np.array(extra)] if extra else []))
        self.origin = np.array(origin, dtype=np.int64)
        self.n_duplicates = next_id - nv - ne
        self.n_dofs = 2 * self.n_nodes
        self.cell_dofs = np.stack([2 * cell_nodes, 2 * cell_nodes + 1], -1).reshape(nc, 12)

    def boundary_nodes(self, mesh: Mesh, side: str):
        """Nodes (including duplicates) lying on a boundary side."""
        sid = BOUNDARY_SIDES.index(side)
        edges = np.flatnonzero(mesh.boundary_side == sid)
        base = np.unique(np.concatenate([mesh.edges[edges].ravel(), mesh.n_vertices + edges]))
        return np.flatnonzero(np.isin(self.origin, base))


@dataclass(frozen=True)
class MechBC:
    """Mechanical condition on one boundary side.

    ``ux``/``uy`` are prescribed displacement values or None (free);
    ``normal_pressure`` is a uniform pressure load ``g = -P n``.
    """

    ux: float | None = None
    uy: float | None = None
    normal_pressure: float = 0.0


class Elasticity:
    """Assembled P2 elasticity operators on a fractured mesh.

    Parameters
    ----------
    mesh : Mesh
    lam, mu : float
        Lame parameters (Pa).
    biot : float
        Biot coefficient.
    axisymmetric : bool
        Use the (x, r) section with hoop strain ``u_r / r`` and ``2 pi r``
        weights; ``r`` is the ``y`` coordinate.
    bcs : dict
        Side name -> :class:`MechBC`. Sides not listed are traction free.
    prestress : sequence, optional
        Constant pre-stress ``(s_xx, s_yy, s_zz, s_xy)`` in Pa; ``s_zz`` is
        the out-of-plane (plane strain) or hoop (axisymmetric) component.
    body_force : callable, optional
        ``points (n, 2) -> (n, 2)`` volumetric force.
    """

    def __init__(self, mesh: Mesh, lam, mu, biot=1.0, axisymmetric=False, bcs=None, prestress=None, body_force=None):
        if not (lam > 0 and mu > 0):
            raise ValueError("Lame parameters must be positive")
        self.mesh = mesh
        self.lam, self.mu, self.biot = float(lam), float(mu), float(biot)
        self.axisymmetric = axisymmetric
        self.bcs = dict(bcs or {})
        self.dofs = MechDofMap(mesh)
        self.prestress = np.zeros(4) if prestress is None else np.asarray(prestress, dtype=float)
        self._geometry()
        self.K = self.stiffness(self.lam, self.mu)
        self._pressure_operators()
        self._dirichlet()
        self.f_const = self._constant_loads(body_force)
        self._lu: SparseLU | None = None

    # -- element geometry ---------------------------------------------

    def _geometry(self, points=TRI6_POINTS, weights=TRI6_WEIGHTS):
        mesh = self.mesh
        v = mesh.vertices[mesh.cells]  # (nc, 3, 2)
        Jm = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)  # columns dx/dxi, dx/deta
        det = Jm[:, 0, 0] * Jm[:, 1, 1] - Jm[:, 0, 1] * Jm[:, 1, 0]
        inv = np.empty_like(Jm)
        inv[:, 0, 0] = Jm[:, 1, 1] / det
        inv[:, 1, 1] = Jm[:, 0, 0] / det
        inv[:, 0, 1] = -Jm[:, 0, 1] / det
        inv[:, 1, 0] = -Jm[:, 1, 0] / det
        N, dN = p2_shape(points[:, 0], points[:, 1])  # (nq, 6), (nq, 6, 2)
        # physical gradients: grad = J^{-T} dN
        grad = np.einsum("kji,qaj->kqai", inv, dN)  # (nc, nq, 6, 2)
        xq = v[:, 0][:, None, :] + np.einsum("kij,qj->kqi", Jm, points)  # (nc, nq, 2)
        w = np.abs(det)[:, None] * 0.5 * weights[None, :]
        if self.axisymmetric:
            w = w * 2 * np.pi * xq[..., 1]
        return N, grad, xq, w

    def _strain_operator(self, N, grad, xq):
        """B with rows (e_xx, e_yy[, e_tt], g_xy) acting on the 12 element dofs."""
        nc, nq = grad.shape[:2]
        ns = 4 if self.axisymmetric else 3
        B = np.zeros((nc, nq, ns, 12))
        gx, gy = grad[..., 0], grad[..., 1]
        B[:, :, 0, 0::2] = gx
        B[:, :, 1, 1::2] = gy
        B[:, :, ns - 1, 0::2] = gy
        B[:, :, ns - 1, 1::2] = gx
        if self.axisymmetric:
            B[:, :, 2, 1::2] = N[None, :, :] / xq[..., 1][..., None]
        return B

    def _D(self, lam, mu):
        if self.axisymmetric:
            D = np.full((4, 4), 0.0)
            D[:3, :3] = lam
            D[0, 0] = D[1, 1] = D[2, 2] = lam + 2 * mu
            D[3, 3] = mu
        else:
            D = np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])
        return D

    def _assemble(self, Ke):
        cd = self.dofs.cell_dofs
        rows = np.repeat(cd, 12, axis=1).ravel()
        cols = np.tile(cd, (1, 12)).ravel()
        n = self.dofs.n_dofs
        return sps.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))

    def stiffness(self, lam, mu):
        """Assemble ``int 2 mu e(u):e(v) + lam div u div v``."""
        N, grad, xq, w = self._geometry()
        B = self._strain_operator(N, grad, xq)
        D = self._D(lam, mu)
        Ke = np.einsum("kq,kqsi,st,kqtj->kij", w, B, D, B)
        return self._assemble(Ke)

    # -- coupling operators -------------------------------------------

    def _pressure_operators(self):
        mesh = self.mesh
        N, grad, xq, w = self._geometry()
        B = self._strain_operator(N, grad, xq)
        ns = B.shape[2]
        div = B[:, :, : ns - 1, :].sum(axis=2)  # (nc, nq, 12)
        De = np.einsum("kq,kqi->ki", w, div)
        nc = mesh.n_cells
        self.Dm = sps.csr_matrix(
            (De.ravel(), (np.repeat(np.arange(nc), 12), self.dofs.cell_dofs.ravel())),
            shape=(nc, self.dofs.n_dofs),
        )
        self.cell_volume = w.sum(axis=1)

        # fracture jump operator: Af[f] . u = int_sigma [[u]]
        nf = mesh.n_faces
        rows, cols, vals = [], [], []
        face_meas = np.zeros(nf)
        for f, e in enumerate(mesh.fracture_edges):
            p0, p1 = mesh.vertices[mesh.edges[e]]
            length = mesh.edge_length[e]
            pts = p0[None, :] + GAUSS3_POINTS[:, None] * (p1 - p0)[None, :]
            wq = GAUSS3_WEIGHTS * length
            if self.axisymmetric:
                wq = wq * 2 * np.pi * pts[:, 1]
            face_meas[f] = wq.sum()
            shp = _edge_shape(GAUSS3_POINTS)  # (3 points, 3 nodes)
            integ = wq @ shp
            n_plus = mesh.fracture_normal[f]
            for a, sgn in ((0, 1.0), (1, -1.0)):
                for node, c in zip(self.dofs.face_nodes[f, a], integ):
                    for comp in (0, 1):
                        rows.append(f)
                        cols.append(2 * node + comp)
                        vals.append(sgn * n_plus[comp] * c)
        self.Af = sps.csr_matrix((vals, (rows, cols)), shape=(nf, self.dofs.n_dofs))
        self.face_measure = face_meas

    def _dirichlet(self):
        fixed = np.zeros(self.dofs.n_dofs, dtype=bool)
        values = np.zeros(self.dofs.n_dofs)
        for side, bc in self.bcs.items():
            nodes = self.dofs.boundary_nodes(self.mesh, side)
            for comp, val in ((0, bc.ux), (1, bc.uy)):
                if val is not None:
                    fixed[2 * nodes + comp] = True
                    values[2 * nodes + comp] = val
        self.fixed = fixed
        self.fixed_values = values
        self.free = np.flatnonzero(~fixed)
        self._check_rigid_modes()

    def _check_rigid_modes(self):
        """Reject Dirichlet sets that leave a rigid motion of any block free.

        Blocks are the connected components of cells joined across
        non-fracture edges; each must be held on its own.
        """
        mesh = self.mesh
        inner = (mesh.edge_cells[:, 1] >= 0) & ~mesh.is_fracture_edge
        a, b = mesh.edge_cells[inner, 0], mesh.edge_cells[inner, 1]
        graph = sps.coo_matrix((np.ones(len(a)), (a, b)), shape=(mesh.n_cells, mesh.n_cells))
        n_blocks, labels = connected_components(graph, directed=False)
        for blk in range(n_blocks):
            nodes = np.unique(self.dofs.cell_nodes[labels == blk])
            where = f" in block {blk} of {n_blocks}" if n_blocks > 1 else ""
            self._check_block(nodes, where)

    def _check_block(self, nodes, where):
        coords = self.dofs.coords
        ux = nodes[self.fixed[2 * nodes]]
        uy = nodes[self.fixed[2 * nodes + 1]]
        if self.axisymmetric:
            # only the axial translation is a rigid mode of the section
            if not len(ux):
                raise SingularityError(f"axial translation is not constrained{where}")
            return
        if not len(ux) or not len(uy):
            raise SingularityError(f"a rigid translation is not constrained{where}")
        # rotation (-y, x): needs constrained dofs not all on one point line
        pts = np.concatenate([coords[ux], coords[uy]])
        comps = np.concatenate([np.zeros(len(ux)), np.ones(len(uy))])
        rows = np.zeros((len(pts), 3))
        rows[comps == 0, 0] = 1.0
        rows[comps == 0, 2] = -pts[comps == 0, 1]
        rows[comps == 1, 1] = 1.0
        rows[comps == 1, 2] = pts[comps == 1, 0]
        if np.linalg.matrix_rank(rows, tol=1e-12 * max(1.0, np.abs(pts).max())) < 3:
            raise SingularityError(f"Dirichlet data leave a rigid rotation free{where}")

    def _constant_loads(self, body_force):
        mesh = self.mesh
        n = self.dofs.n_dofs
        f = np.zeros(n)
        # boundary pressure loads g = -P n
        for side, bc in self.bcs.items():
            if bc.normal_pressure == 0:
                continue
            sid = BOUNDARY_SIDES.index(side)
            for e in np.flatnonzero(mesh.boundary_side == sid):
                k, le = mesh.edge_cells[e, 0], mesh.edge_local[e, 0]
                normal = mesh.cell_normals[k, le]
                v0 = mesh.vertices[mesh.cells[k, le]]
                v1 = mesh.vertices[mesh.cells[k, (le + 1) % 3]]
                pts = v0[None, :] + GAUSS3_POINTS[:, None] * (v1 - v0)[None, :]
                wq = GAUSS3_WEIGHTS * mesh.edge_length[e]
                if self.axisymmetric:
                    wq = wq * 2 * np.pi * pts[:, 1]
                integ = wq @ _edge_shape(GAUSS3_POINTS)
                nodes = (
                    self.dofs.cell_nodes[k, le],
                    self.dofs.cell_nodes[k, (le + 1) % 3],
                    self.dofs.cell_nodes[k, 3 + le],
                )
                for node, c in zip(nodes, integ):
                    f[2 * node : 2 * node + 2] += -bc.normal_pressure * c * normal
        # pre-stress: - int sigma0 : e(v)
        if np.any(self.prestress != 0):
            N, grad, xq, w = self._geometry()
            B = self._strain_operator(N, grad, xq)
            sxx, syy, szz, sxy = self.prestress
            s0 = np.array([sxx, syy, szz, sxy]) if self.axisymmetric else np.array([sxx, syy, sxy])
            fe = -np.einsum("kq,kqsi,s->ki", w, B, s0)
            np.add.at(f, self.dofs.cell_dofs.ravel(), fe.ravel())
        if body_force is not None:
            N, grad, xq, w = self._geometry(TRI7_POINTS, TRI7_WEIGHTS)
            bf = np.asarray(body_force(xq.reshape(-1, 2)), dtype=float).reshape(xq.shape)
            fe = np.einsum("kq,qa,kqc->kac", w, N, bf).reshape(len(w), 12)
            np.add.at(f, self.dofs.cell_dofs.ravel(), fe.ravel())
        return f

    # -- loads and solves ---------------------------------------------

    def pressure_load(self, pE_m, pE_f=None):
        """``b sum_K p_K int_K div v - sum_sigma p_sigma int_sigma [[v]]``."""
        load = self.biot * (self.Dm.T @ np.asarray(pE_m, dtype=float))
        if pE_f is not None and self.mesh.n_faces:
            load -= self.Af.T @ np.asarray(pE_f, dtype=float)
        return load

    def factorize(self):
        if self._lu is None:
            Kff = self.K[self.free][:, self.free]
            try:
                self._lu = sparse_lu(Kff)
            except LinearSolveError as exc:
                raise LinearSolveError(f"stiffness factorization failed: {exc}") from exc
        return self._lu

    def solve(self, load, homogeneous=False):
        """Displacement for the total load vector ``load``.

        With ``homogeneous`` the Dirichlet values are taken as zero (used for
        linearized increments).
        """
        lu = self.factorize()
        u = np.zeros(self.dofs.n_dofs)
        if not homogeneous:
            u[self.fixed] = self.fixed_values[self.fixed]
        rhs = load[self.free] - (self.K[self.free] @ u if not homogeneous and np.any(u) else 0.0)
        u[self.free] = lu.solve(rhs)
        return u

    def solve_pressure(self, pE_m, pE_f=None):
        """Solve with constant loads plus equivalent-pressure loads."""
        return self.solve(self.f_const + self.pressure_load(pE_m, pE_f))

    # -- derived fields -----------------------------------------------

    def divergence(self, u):
        """Cell-averaged ``div u``."""
        return (self.Dm @ u) / self.cell_volume

    def jump_integral(self, u):
        """``int_sigma [[u]]`` per fracture face."""
        return self.Af @ u

    def aperture(self, u):
        """Face-wise ``-(1/|sigma|) int [[u]]``."""
        if not self.mesh.n_faces:
            return np.zeros(0)
        return -(self.Af @ u) / self.face_measure

    def strain_energy_matrix(self):
        """Matrix ``E`` with ``u^T E u = int e(u):e(u)`` (times 2 for shear)."""
        if not hasattr(self, "_E"):
            self._E = self.stiffness(1e-300, 0.5)
        return self._E

    def cell_strain(self, u):
        """Strain at cell centroids, columns (xx, yy, zz/tt, xy) with tensor shear."""
        mesh = self.mesh
        c = np.array([[1 / 3, 1 / 3]])
        N, dN = p2_shape(c[:, 0], c[:, 1])
        v = mesh.vertices[mesh.cells]
        Jm = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
        inv = np.linalg.inv(Jm)
        grad = np.einsum("kji,qaj->kqai", inv, dN)[:, 0]  # (nc, 6, 2)
        ue = u[self.dofs.cell_dofs].reshape(-1, 6, 2)
        G = np.einsum("kai,kac->kci", grad, ue)  # du_c/dx_i
        exx, eyy = G[:, 0, 0], G[:, 1, 1]
        exy = 0.5 * (G[:, 0, 1] + G[:, 1, 0])
        if self.axisymmetric:
            ur = np.einsum("a,ka->k", N[0], ue[..., 1])
            ezz = ur / mesh.centroid[:, 1]
        else:
            ezz = np.zeros_like(exx)
        return np.stack([exx, eyy, ezz, exy], axis=1)

    def total_stress(self, u, pE_m, prestress=None):
        """``sigma0 + sigma(u) - b pE I`` at centroids: (xx, yy, zz/tt, xy)."""
        eps = self.cell_strain(u)
        tr = eps[:, 0] + eps[:, 1] + eps[:, 2]
        s0 = self.prestress if prestress is None else np.asarray(prestress, dtype=float)
        sig = 2 * self.mu * eps
        sig[:, :3] += (self.lam * tr)[:, None]
        sig += s0[None, :]
        sig[:, :3] -= (self.biot * np.asarray(pE_m, dtype=float))[:, None]
        return sig
