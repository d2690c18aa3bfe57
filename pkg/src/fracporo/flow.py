"""Two-phase TPFA flow with discontinuous matrix-fracture pressures.

Flow entities are matrix cells, fracture faces, the two interface sides of
every fracture face and the fracture intersection nodes. Each entity carries
both phase pressures; the unknown of phase ``a`` (0 = nw, 1 = w) at entity
``e`` has index ``2 e + a``.

Every flux is a two-point flux ``F = T eta_up (p_0 - p_1)`` along a
*connection* between two entities (or an entity and a Dirichlet state). The
mobility is taken at the upstream endpoint, each endpoint having its own
saturation law and mobility law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import ClosureError
from .mesh import (
    BOUNDARY_SIDES,
    NODE_BOUNDARY,
    NODE_INTERSECTION,
    NODE_SIMPLE,
    NODE_TIP,
    Mesh,
    measures,
)
from .rockphys import ROCK_F, ROCK_M, ROCK_MINUS, ROCK_PLUS, RockType, capillary_pressure

__all__ = [
    "FlowDofMap",
    "FlowClosures",
    "FlowModel",
    "interface_flux",
    "matrix_flux",
    "tangential_transmissibility",
    "single_phase_system",
    "NW",
    "W",
]

NW, W = 0, 1

# connection kinds
K_MATRIX, K_HALF, K_INTERFACE, K_TANGENTIAL, K_BC_MATRIX, K_BC_FRACTURE = range(6)


def matrix_flux(T, p_k, p_other, eta_k, eta_other):
    """Upwinded two-point flux from K to the other entity."""
    p_k = np.asarray(p_k, dtype=float)
    p_other = np.asarray(p_other, dtype=float)
    eta = np.where(p_k >= p_other, eta_k, eta_other)
    return T * eta * (p_k - p_other)


def interface_flux(jump, eta_damaged, eta_fracture, T_f, length):
    """Matrix-fracture exchange flux ``Q = T_f |sigma| eta_up [[p]]``.

    ``jump`` is the interface-side pressure minus the fracture pressure; the
    damaged-layer mobility is upstream when ``jump >= 0``. Hence
    ``Q * jump >= 0``.
    """
    jump = np.asarray(jump, dtype=float)
    eta = np.where(jump >= 0, eta_damaged, eta_fracture)
    return T_f * length * eta * jump


def tangential_transmissibility(d1, d2, half1, half2, measure=1.0):
    """Harmonic combination of the half transmissibilities ``d^3/12 / half``."""
    t1 = np.asarray(d1, dtype=float) ** 3 / 12.0 * measure / half1
    t2 = np.asarray(d2, dtype=float) ** 3 / 12.0 * measure / half2
    s = t1 + t2
    return np.where(s > 0, t1 * t2 / np.where(s > 0, s, 1.0), 0.0)


class FlowDofMap:
    """Index layout of the flow unknowns.

    Entities are numbered cells, faces, sides (``+`` then ``-`` for each
    face), nodes. The unknown of phase ``a`` at entity ``e`` is ``2 e + a``.
    """

    def __init__(self, n_cells, n_faces, n_nodes):
        self.n_cells = n_cells
        self.n_faces = n_faces
        self.n_nodes = n_nodes
        self.cell0 = 0
        self.face0 = n_cells
        self.side0 = n_cells + n_faces
        self.node0 = n_cells + 3 * n_faces
        self.n_entities = n_cells + 3 * n_faces + n_nodes

    @property
    def n_unknowns(self):
        return 2 * self.n_entities

    @property
    def per_phase(self):
        return self.n_entities

    def cells(self):
        return np.arange(self.n_cells)

    def faces(self):
        return self.face0 + np.arange(self.n_faces)

    def side(self, face, a):
        """Entity id of side ``a`` (0 = +, 1 = -) of ``face``."""
        return self.side0 + 2 * np.asarray(face) + a

    def sides(self):
        return self.side0 + np.arange(2 * self.n_faces)

    def nodes(self):
        return self.node0 + np.arange(self.n_nodes)

    @staticmethod
    def unknown(entity, phase):
        return 2 * np.asarray(entity) + phase


@dataclass
class FlowClosures:
    """Quantities frozen during a flow solve.

    ``phi_ref`` is the porosity part ``phi0 + b div(u - u0)`` per cell and
    ``d_f`` the face apertures; ``pE0`` is the reference equivalent pressure
    per cell.
    """

    phi_ref: np.ndarray
    d_f: np.ndarray
    pE0: np.ndarray


class _Groups:
    """Index groups by rock type, for vectorized law evaluation."""

    def __init__(self, rock_ids):
        self.rock_ids = np.asarray(rock_ids, dtype=np.int64)
        self.groups = [(r, np.flatnonzero(self.rock_ids == r)) for r in range(4)]
        self.groups = [(r, g) for r, g in self.groups if len(g)]


class FlowModel:
    """Discrete two-phase flow system on a fractured mesh.

    Parameters
    ----------
    mesh : Mesh
    rocks : sequence of 4 RockType
        Indexed by ``ROCK_M``, ``ROCK_F``, ``ROCK_PLUS``, ``ROCK_MINUS``.
    permeability : float
        Matrix permeability (m^2).
    normal_transmissivity : float
        ``T_f`` (m); unused in continuous mode.
    biot_modulus : float
        ``M`` (Pa).
    mode : {"discontinuous", "continuous"}
    axisymmetric : bool
    matrix_dirichlet, fracture_dirichlet : dict
        Boundary side name -> ``(p_nw, p_w)`` of the Dirichlet state.
    saturation_floor : float
        Lower bound ``eps / R`` on ``dS/dp_c`` used in the accumulation part
        of the Jacobian only; the residual is not affected.
    """

    def __init__(
        self,
        mesh: Mesh,
        rocks,
        permeability: float,
        normal_transmissivity: float,
        biot_modulus: float,
        mode: str = "discontinuous",
        axisymmetric: bool = False,
        matrix_dirichlet=None,
        fracture_dirichlet=None,
        saturation_floor: float = 1e-6,
    ):
        if mode not in ("discontinuous", "continuous"):
            raise ValueError(f"unknown flow mode {mode!r}")
        if len(rocks) != 4:
            raise ValueError("four rock types are required")
        self.mesh = mesh
        self.rocks = list(rocks)
        self.permeability = float(permeability)
        self.T_f = float(normal_transmissivity)
        self.M = float(biot_modulus)
        self.mode = mode
        self.continuous = mode == "continuous"
        self.axisymmetric = axisymmetric
        self.matrix_dirichlet = dict(matrix_dirichlet or {})
        self.fracture_dirichlet = dict(fracture_dirichlet or {})
        for side in list(self.matrix_dirichlet) + list(self.fracture_dirichlet):
            if side not in BOUNDARY_SIDES:
                raise ValueError(f"unknown boundary side {side!r}")
        self.saturation_floor = saturation_floor
        self.cell_volume, self.edge_measure = measures(mesh, axisymmetric)
        self.face_measure = self.edge_measure[mesh.fracture_edges]
        self._build_nodes()
        self.dofs = FlowDofMap(mesh.n_cells, mesh.n_faces, len(self.node_vertices))
        self._build_entities()
        self._build_connections()
        self.source = np.zeros((self.dofs.n_entities, 2))

    # -- layout -------------------------------------------------------

    def _boundary_side_of_point(self, p):
        x0, x1, y0, y1 = self.mesh.domain
        tol = 1e-9 * max(x1 - x0, y1 - y0)
        for name, hit in zip(
            BOUNDARY_SIDES,
            (abs(p[0] - x0) < tol, abs(p[0] - x1) < tol, abs(p[1] - y0) < tol, abs(p[1] - y1) < tol),
        ):
            if hit:
                return name
        return None

    def _build_nodes(self):
        mesh = self.mesh
        node_faces = mesh.node_faces()
        node_vertices = []
        self.node_plan = []  # (vertex, kind, faces, bc side or None)
        for v, kind, deg in zip(mesh.fracture_nodes, mesh.fracture_node_kind, mesh.fracture_node_degree):
            faces = node_faces[int(v)]
            bc = None
            if kind == NODE_BOUNDARY:
                side = self._boundary_side_of_point(mesh.vertices[v])
                if side in self.fracture_dirichlet:
                    bc = side
            if bc is not None:
                plan = "dirichlet"
            elif deg >= 3:
                plan = "node"
                node_vertices.append(int(v))
            elif deg == 2:
                plan = "pair"
            else:
                plan = "closed"
            self.node_plan.append((int(v), int(kind), faces, plan, bc))
        self.node_vertices = np.array(node_vertices, dtype=np.int64)

    def _build_entities(self):
        d = self.dofs
        rock = np.empty(d.n_entities, dtype=np.int64)
        rock[: d.face0] = ROCK_M
        rock[d.face0 : d.side0] = ROCK_F
        rock[d.side0 : d.node0 : 2] = ROCK_PLUS
        rock[d.side0 + 1 : d.node0 : 2] = ROCK_MINUS
        rock[d.node0 :] = ROCK_F
        self.entity_rock = rock
        self._entity_groups = _Groups(rock)

    def _build_connections(self):
        mesh = self.mesh
        d = self.dofs
        lam = self.permeability
        e0, e1, T, kind, bc = [], [], [], [], []
        rs0, rm0, rs1, rm1 = [], [], [], []
        bc_p, bc_rock = [], []

        def add(a, b, t, k, r0, r1, bci=-1):
            n = len(np.atleast_1d(a))
            e0.append(np.broadcast_to(np.asarray(a, dtype=np.int64), (n,)))
            e1.append(np.broadcast_to(np.asarray(b, dtype=np.int64), (n,)))
            T.append(np.broadcast_to(np.asarray(t, dtype=float), (n,)))
            kind.append(np.full(n, k))
            bc.append(np.broadcast_to(np.asarray(bci, dtype=np.int64), (n,)))
            rs0.append(np.full(n, r0[0]))
            rm0.append(np.full(n, r0[1]))
            rs1.append(np.full(n, r1[0]))
            rm1.append(np.full(n, r1[1]))

        MM = (ROCK_M, ROCK_M)
        FF = (ROCK_F, ROCK_F)

        # matrix-matrix
        interior = (mesh.edge_cells[:, 1] >= 0) & ~mesh.is_fracture_edge
        ie = np.flatnonzero(interior)
        kc, lc = mesh.edge_cells[ie, 0], mesh.edge_cells[ie, 1]
        dk = mesh.cell_edge_distances[kc, mesh.edge_local[ie, 0]]
        dl = mesh.cell_edge_distances[lc, mesh.edge_local[ie, 1]]
        add(kc, lc, lam * self.edge_measure[ie] / (dk + dl), K_MATRIX, MM, MM)

        # matrix Dirichlet boundary edges
        for name, (pn, pw) in self.matrix_dirichlet.items():
            side_id = BOUNDARY_SIDES.index(name)
            be = np.flatnonzero(mesh.boundary_side == side_id)
            if not len(be):
                continue
            idx = len(bc_p)
            bc_p.append((pn, pw))
            bc_rock.append(ROCK_M)
            kc = mesh.edge_cells[be, 0]
            dk = mesh.cell_edge_distances[kc, mesh.edge_local[be, 0]]
            add(kc, -1, lam * self.edge_measure[be] / dk, K_BC_MATRIX, MM, MM, idx)

        # matrix half fluxes to the interface sides (or to the face)
        nf = mesh.n_faces
        if nf:
            faces = np.arange(nf)
            for a in (0, 1):
                kc = mesh.fracture_sides[:, a]
                loc = mesh.edge_local[mesh.fracture_edges, a]
                dk = mesh.cell_edge_distances[kc, loc]
                target = d.face0 + faces if self.continuous else d.side(faces, a)
                add(kc, target, lam * self.face_measure / dk, K_HALF, MM, MM)
            if not self.continuous:
                for a, r in ((0, ROCK_PLUS), (1, ROCK_MINUS)):
                    add(d.side(faces, a), d.face0 + faces, self.T_f * self.face_measure, K_INTERFACE, (r, r), FF)

        # fracture tangential connections; T is filled in from the apertures
        tan_f0, tan_f1, tan_g0, tan_g1 = [], [], [], []
        tan_e0, tan_e1, tan_bc = [], [], []
        face_point = mesh.edge_point[mesh.fracture_edges]
        node_index = {int(v): i for i, v in enumerate(self.node_vertices)}
        fbc_index = {}
        for v, _, faces, plan, side in self.node_plan:
            mfac = 2 * np.pi * mesh.vertices[v, 1] if self.axisymmetric else 1.0

            def half(f):
                return float(np.hypot(*(face_point[f] - mesh.vertices[v])))
            if plan == "pair":
                f0, f1 = faces
                tan_f0.append(f0)
                tan_f1.append(f1)
                tan_g0.append(mfac / half(f0))
                tan_g1.append(mfac / half(f1))
                tan_e0.append(d.face0 + f0)
                tan_e1.append(d.face0 + f1)
                tan_bc.append(-1)
            elif plan in ("node", "dirichlet"):
                if plan == "dirichlet" and side not in fbc_index:
                    fbc_index[side] = len(bc_p)
                    bc_p.append(self.fracture_dirichlet[side])
                    bc_rock.append(ROCK_F)
                for f in faces:
                    tan_f0.append(f)
                    tan_f1.append(-1)
                    tan_g0.append(mfac / half(f))
                    tan_g1.append(0.0)
                    tan_e0.append(d.face0 + f)
                    if plan == "node":
                        tan_e1.append(d.node0 + node_index[v])
                        tan_bc.append(-1)
                    else:
                        tan_e1.append(-1)
                        tan_bc.append(fbc_index[side])
        self.n_static = int(sum(len(x) for x in e0))
        if tan_e0:
            add(
                np.array(tan_e0),
                np.array(tan_e1),
                np.zeros(len(tan_e0)),
                K_TANGENTIAL,
                FF,
                FF,
                np.array(tan_bc),
            )
        self.tan_f0 = np.array(tan_f0, dtype=np.int64)
        self.tan_f1 = np.array(tan_f1, dtype=np.int64)
        self.tan_g0 = np.array(tan_g0, dtype=float)
        self.tan_g1 = np.array(tan_g1, dtype=float)

        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
        self.c_e0 = cat(e0, np.int64)
        self.c_e1 = cat(e1, np.int64)
        self.c_T = cat(T, float)
        self.c_kind = cat(kind, np.int64)
        self.c_bc = cat(bc, np.int64)
        self.c_rs0, self.c_rm0 = cat(rs0, np.int64), cat(rm0, np.int64)
        self.c_rs1, self.c_rm1 = cat(rs1, np.int64), cat(rm1, np.int64)
        self.n_connections = len(self.c_e0)
        self.tan_slice = slice(self.n_static, self.n_connections)

        # Dirichlet states: pressures and mobilities
        self.bc_p = np.array(bc_p, dtype=float).reshape(-1, 2)
        self.bc_eta = np.zeros_like(self.bc_p)
        for i, ((pn, pw), r) in enumerate(zip(self.bc_p, bc_rock)):
            rock = self.rocks[r]
            s, _, _ = rock.saturation.evaluate(pn - pw)
            self.bc_eta[i, NW] = rock.mobility_nw.evaluate(s)[0]
            self.bc_eta[i, W] = rock.mobility_w.evaluate(1.0 - s)[0]

        is_bc = self.c_e1 < 0
        self.c_is_bc = is_bc
        self.c_e1_safe = np.where(is_bc, 0, self.c_e1)
        self._g0s = _Groups(self.c_rs0)
        self._g0m = _Groups(self.c_rm0)
        self._g1s = _Groups(self.c_rs1)
        self._g1m = _Groups(self.c_rm1)

        self._node_faces = [
            [f for f in faces]
            for v, _, faces, plan, _ in self.node_plan
            if plan == "node"
        ]
        node_r = mesh.vertices[self.node_vertices, 1] if len(self.node_vertices) else np.zeros(0)
        self._node_measure = 2 * np.pi * node_r if self.axisymmetric else np.ones(len(self.node_vertices))

    # -- sources ------------------------------------------------------

    def set_sources(self, cell_rate=None, face_rate=None):
        """Set volumetric source densities.

        Parameters
        ----------
        cell_rate : (n_cells, 2) array, optional
            Rate per unit cell measure (1/s).
        face_rate : (n_faces, 2) array, optional
            Rate per unit fracture measure (m/s).
        """
        src = np.zeros((self.dofs.n_entities, 2))
        if cell_rate is not None:
            src[: self.dofs.n_cells] = np.asarray(cell_rate, dtype=float) * self.cell_volume[:, None]
        if face_rate is not None and self.dofs.n_faces:
            src[self.dofs.face0 : self.dofs.side0] = np.asarray(face_rate, dtype=float) * self.face_measure[:, None]
        self.source = src

    # -- laws ---------------------------------------------------------

    def _saturation(self, pc, groups):
        s = np.empty_like(pc)
        ds = np.empty_like(pc)
        u = np.empty_like(pc)
        for r, g in groups.groups:
            s[g], ds[g], u[g] = self.rocks[r].saturation.evaluate(pc[g])
        return s, ds, u

    def _mobility(self, s_nw, groups):
        eta = np.empty((len(s_nw), 2))
        deta = np.empty((len(s_nw), 2))
        for r, g in groups.groups:
            rock = self.rocks[r]
            eta[g, NW], deta[g, NW] = rock.mobility_nw.evaluate(s_nw[g])
            eta[g, W], deta[g, W] = rock.mobility_w.evaluate(1.0 - s_nw[g])
        return eta, deta

    def entity_state(self, x):
        """Per-entity ``(p_nw, p_w, pc, s_nw, dS/dpc, U)`` with each entity's own law."""
        p = x.reshape(-1, 2)
        pc = p[:, NW] - p[:, W]
        s, ds, u = self._saturation(pc, self._entity_groups)
        return p[:, NW], p[:, W], pc, s, ds, u

    def newton_update(self, x, dx, max_saturation_change=0.2):
        """Limited Newton update.

        The capillary pressure of each entity is adjusted so that its
        saturation changes by at most ``max_saturation_change`` and
        ``p_c >= 0``. The pressure of the phase with the larger saturation
        keeps its full update. On ``p_c <= 0`` saturation, capillary energy
        and equivalent pressure are flat, so the projection does not change
        the physical state; it removes the indeterminacy of ``p_nw`` in
        gas-free entities.
        """
        p_old = x.reshape(-1, 2)
        p_new = p_old + dx.reshape(-1, 2)
        pc_old = p_old[:, NW] - p_old[:, W]
        pc_new = p_new[:, NW] - p_new[:, W]
        s_old, _, _ = self._saturation(pc_old, self._entity_groups)
        s_new, _, _ = self._saturation(pc_new, self._entity_groups)
        ds = max_saturation_change
        lo, hi = s_old - ds, s_old + ds
        limited = (s_new < lo) | (s_new > hi)
        if np.any(limited):
            target = np.clip(s_new, lo, hi)
            for r, g in self._entity_groups.groups:
                sel = g[limited[g]]
                if len(sel):
                    pc_new[sel] = capillary_pressure(self.rocks[r].saturation, np.clip(target[sel], 0.0, 1.0 - 1e-15))
        changed = limited | (pc_new < 0.0)
        pc_new = np.maximum(pc_new, 0.0)
        keep_nw = changed & (s_old >= 0.5)
        keep_w = changed & (s_old < 0.5)
        out = p_new.copy()
        out[keep_nw, W] = p_new[keep_nw, NW] - pc_new[keep_nw]
        out[keep_w, NW] = p_new[keep_w, W] + pc_new[keep_w]
        return out.ravel()

    def equivalent_pressures(self, x):
        """Cell-wise and face-wise equivalent pressures."""
        pn, pw, _, s, _, u = self.entity_state(x)
        pe = pn * s + pw * (1.0 - s) - u
        d = self.dofs
        return pe[: d.n_cells].copy(), pe[d.face0 : d.side0].copy()

    def saturation_weights(self, x):
        """``(S^nw, S^w)`` per cell and per face: derivatives of ``p^E``."""
        _, _, _, s, _, _ = self.entity_state(x)
        d = self.dofs
        return s[: d.n_cells], s[d.face0 : d.side0]

    # -- closures -----------------------------------------------------

    def tangential_T(self, d_f):
        """Tangential transmissibilities for the current apertures."""
        if not len(self.tan_f0):
            return np.zeros(0)
        d0 = d_f[self.tan_f0]
        t0 = d0**3 / 12.0 * self.tan_g0
        pair = self.tan_f1 >= 0
        d1 = d_f[np.where(pair, self.tan_f1, 0)]
        t1 = d1**3 / 12.0 * self.tan_g1
        s = t0 + t1
        harm = np.where(s > 0, t0 * t1 / np.where(s > 0, s, 1.0), 0.0)
        return np.where(pair, harm, t0)

    def porosity(self, x, closures: FlowClosures):
        pe_m, _ = self.equivalent_pressures(x)
        return closures.phi_ref + (pe_m - closures.pE0) / self.M

    def pore_volumes(self, x, closures: FlowClosures):
        """Per-entity pore volume (m^3 or m^2 per unit thickness)."""
        return self._pore_volumes(self.porosity(x, closures), closures)

    def _pore_volumes(self, phi, closures: FlowClosures):
        # intersection nodes hold the crossing volume: squared mean aperture
        d = self.dofs
        pv = np.zeros(d.n_entities)
        pv[: d.n_cells] = self.cell_volume * phi
        if d.n_faces:
            pv[d.face0 : d.side0] = self.face_measure * closures.d_f
            if not self.continuous:
                for a, r in ((0, ROCK_PLUS), (1, ROCK_MINUS)):
                    rock = self.rocks[r]
                    pv[d.side0 + a : d.node0 : 2] = self.face_measure * rock.width * rock.porosity
            for i, faces in enumerate(self._node_faces):
                pv[d.node0 + i] = self._node_measure[i] * np.mean(closures.d_f[faces]) ** 2
        return pv

    def masses(self, x, closures: FlowClosures):
        """Per-entity phase volumes, shape (n_entities, 2)."""
        _, _, _, s, _, _ = self.entity_state(x)
        pv = self.pore_volumes(x, closures)
        return np.stack([pv * s, pv * (1.0 - s)], axis=1)

    def row_scale(self, closures: FlowClosures, dt):
        """Row scaling ``1 / (dt-free reference pore volume)``."""
        d = self.dofs
        ref = np.zeros(d.n_entities)
        ref[: d.n_cells] = self.cell_volume * np.maximum(closures.phi_ref, 1e-12)
        if d.n_faces:
            ref[d.face0 : d.side0] = self.face_measure * np.maximum(closures.d_f, 1e-300)
            if self.continuous:
                ref[d.side0 : d.node0] = 1.0
            else:
                for a, r in ((0, ROCK_PLUS), (1, ROCK_MINUS)):
                    rock = self.rocks[r]
                    ref[d.side0 + a : d.node0 : 2] = self.face_measure * rock.width * rock.porosity
            for i, faces in enumerate(self._node_faces):
                ref[d.node0 + i] = np.mean(ref[d.face0 + np.array(faces)])
        scale = np.repeat(1.0 / ref, 2)
        return scale

    def check_closures(self, closures: FlowClosures):
        if np.any(~(closures.d_f > 0)):
            i = int(np.argmin(closures.d_f))
            raise ClosureError(f"non-positive aperture {closures.d_f[i]:.3g} on face {i}")

    # -- assembly -----------------------------------------------------

    def fluxes(self, x, closures: FlowClosures, upwind=None):
        """Connection fluxes ``F[c, phase]`` (positive from e0 to e1)."""
        F, *_ = self._connection_terms(x, closures, upwind)
        return F

    def _connection_terms(self, x, closures, upwind):
        p = x.reshape(-1, 2)
        pc = p[:, NW] - p[:, W]
        T = self.c_T.copy()
        if self.n_connections > self.n_static:
            T[self.tan_slice] = self.tangential_T(closures.d_f)
        e0, e1 = self.c_e0, self.c_e1_safe
        is_bc = self.c_is_bc
        bci = np.where(is_bc, self.c_bc, 0)

        s0, ds0, _ = self._saturation(pc[e0], self._g0s)
        eta0, deta0 = self._mobility(s0, self._g0m)
        s1, ds1, _ = self._saturation(pc[e1], self._g1s)
        eta1, deta1 = self._mobility(s1, self._g1m)
        p0 = p[e0]
        p1 = p[e1]
        if len(self.bc_p):
            p1 = np.where(is_bc[:, None], self.bc_p[bci], p1)
            eta1 = np.where(is_bc[:, None], self.bc_eta[bci], eta1)
            deta1 = np.where(is_bc[:, None], 0.0, deta1)
        # d eta / d pc at each endpoint; s^w = 1 - s^nw
        sign = np.array([1.0, -1.0])
        dpc0 = deta0 * ds0[:, None] * sign
        dpc1 = deta1 * ds1[:, None] * sign
        dp = p0 - p1
        up0 = dp >= 0 if upwind is None else upwind
        eta = np.where(up0, eta0, eta1)
        deta_dpc = np.where(up0, dpc0, dpc1)
        F = T[:, None] * eta * dp
        return F, T, eta, deta_dpc, dp, up0

    def assemble(self, x, closures: FlowClosures, dt, mass_prev, jacobian=True, upwind=None):
        """Residual (and Jacobian) of the implicit Euler flow step.

        The residual of entity ``e`` and phase ``a`` is

            m_a(x) - m_a^n + dt (sum of outgoing fluxes - sources)

        in volume units. Interface sides in continuous mode carry the
        constraint ``p_side - p_face`` instead.

        Returns
        -------
        R : ndarray
        J : csr_matrix or None
        info : dict
            ``F`` connection fluxes, ``upwind`` directions, ``phi`` cell
            porosities, ``mass`` per-entity phase volumes.
        """
        self.check_closures(closures)
        d = self.dofs
        n = d.n_entities
        pn, pw, pc, s, ds, u = self.entity_state(x)
        pe = pn * s + pw * (1.0 - s) - u
        phi = closures.phi_ref + (pe[: d.n_cells] - closures.pE0) / self.M
        if np.any(~(phi > 0)):
            i = int(np.argmin(phi))
            raise ClosureError(f"non-positive porosity {phi[i]:.3g} in cell {i}")
        pv = self._pore_volumes(phi, closures)
        mass = np.stack([pv * s, pv * (1.0 - s)], axis=1)
        R = (mass - mass_prev) - dt * self.source

        F, T, eta, deta_dpc, dp, up0 = self._connection_terms(x, closures, upwind)
        e0, e1, is_bc = self.c_e0, self.c_e1, self.c_is_bc
        np.add.at(R, e0, dt * F)
        inner = ~is_bc
        np.add.at(R, e1[inner], -dt * F[inner])

        con = None
        if self.continuous and d.n_faces:
            faces = np.arange(d.n_faces)
            sides = d.side(np.repeat(faces, 2), np.tile([0, 1], d.n_faces))
            ff = d.face0 + np.repeat(faces, 2)
            con = (sides, ff)
            R[sides] = 1e-6 * (x.reshape(-1, 2)[sides] - x.reshape(-1, 2)[ff])

        R = R.ravel()
        info = {"F": F, "upwind": up0, "phi": phi, "mass": mass, "pv": pv}
        if not jacobian:
            return R, None, info

        rows, cols, vals = [], [], []

        # accumulation
        floor = np.empty(n)
        for r, g in self._entity_groups.groups:
            floor[g] = self.saturation_floor / self.rocks[r].saturation.R
        dsJ = np.maximum(ds, floor)
        acc = np.flatnonzero(pv > 0)
        pva = pv[acc]
        sa = s[acc]
        dsa = dsJ[acc]
        # d pv / d p_nw and d p_w for cells through the porosity
        dpv_n = np.zeros(len(acc))
        dpv_w = np.zeros(len(acc))
        is_cell = acc < d.n_cells
        dpv_n[is_cell] = self.cell_volume[acc[is_cell]] * sa[is_cell] / self.M
        dpv_w[is_cell] = self.cell_volume[acc[is_cell]] * (1.0 - sa[is_cell]) / self.M
        # phase nw: pv s;  phase w: pv (1 - s)
        for a, sval, dsgn in ((NW, sa, 1.0), (W, 1.0 - sa, -1.0)):
            rr = 2 * acc + a
            rows += [rr, rr]
            cols += [2 * acc + NW, 2 * acc + W]
            vals += [dpv_n * sval + pva * dsgn * dsa, dpv_w * sval - pva * dsgn * dsa]

        # fluxes
        Tdt = dt * T
        ebc = np.where(is_bc, 0, e1)
        for a in (NW, W):
            dFi = Tdt * eta[:, a]
            up_ent = np.where(up0[:, a], e0, e1)
            up_ok = up_ent >= 0
            dFu = Tdt * dp[:, a] * deta_dpc[:, a]
            r0 = 2 * e0 + a
            r1 = 2 * ebc + a
            # d/dp_{e0}^a, d/dp_{e1}^a
            rows += [r0, r1[inner], r0[inner], r1[inner]]
            cols += [2 * e0 + a, 2 * e0[inner] + a, 2 * ebc[inner] + a, 2 * ebc[inner] + a]
            vals += [dFi, -dFi[inner], -dFi[inner], dFi[inner]]
            # mobility derivative at the upstream entity
            uu = up_ent[up_ok]
            du = dFu[up_ok]
            ru0 = r0[up_ok]
            rows += [ru0, ru0]
            cols += [2 * uu + NW, 2 * uu + W]
            vals += [du, -du]
            both = up_ok & inner
            uu = up_ent[both]
            du = dFu[both]
            ru1 = r1[both]
            rows += [ru1, ru1]
            cols += [2 * uu + NW, 2 * uu + W]
            vals += [-du, du]

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        if con is not None:
            sides, ff = con
            drop = np.isin(rows // 2, sides)
            rows, cols, vals = rows[~drop], cols[~drop], vals[~drop]
            cr, cc, cv = [], [], []
            for a in (NW, W):
                cr += [2 * sides + a, 2 * sides + a]
                cc += [2 * sides + a, 2 * ff + a]
                cv += [np.full(len(sides), 1e-6), np.full(len(sides), -1e-6)]
            rows = np.concatenate([rows] + cr)
            cols = np.concatenate([cols] + cc)
            vals = np.concatenate([vals] + cv)
        # explicit diagonal so that ILU(0) always finds a pivot slot
        diag = np.arange(2 * n)
        rows = np.concatenate([rows, diag])
        cols = np.concatenate([cols, diag])
        vals = np.concatenate([vals, np.zeros(2 * n)])
        J = sps.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))
        return R, J, info

    # -- diagnostics --------------------------------------------------

    def interface_dissipation(self, x, closures, info=None):
        """``sum Q [[p]]`` per phase over all interface connections."""
        F = self.fluxes(x, closures) if info is None else info["F"]
        sel = self.c_kind == K_INTERFACE
        if not np.any(sel):
            return np.zeros(2)
        p = x.reshape(-1, 2)
        jump = p[self.c_e0[sel]] - p[self.c_e1[sel]]
        return (F[sel] * jump).sum(axis=0)

    def interface_jumps(self, x):
        """Per-side pressure jumps ``p_side - p_face``, shape (n_faces, 2, 2)."""
        d = self.dofs
        p = x.reshape(-1, 2)
        out = np.zeros((d.n_faces, 2, 2))
        for a in (0, 1):
            out[:, a, :] = p[d.side(np.arange(d.n_faces), a)] - p[d.face0 : d.side0]
        return out

    def initial_state(self, cell_p, face_p=None):
        """Flow vector from ``(p_nw, p_w)`` pairs for cells and fracture entities.

        Interface sides take the pressures of their matrix cell; nodes the
        mean of their faces.
        """
        d = self.dofs
        x = np.zeros((d.n_entities, 2))
        cell_p = np.broadcast_to(np.asarray(cell_p, dtype=float), (d.n_cells, 2))
        x[: d.n_cells] = cell_p
        if d.n_faces:
            face_p = cell_p[self.mesh.fracture_sides[:, 0]] if face_p is None else face_p
            face_p = np.broadcast_to(np.asarray(face_p, dtype=float), (d.n_faces, 2))
            x[d.face0 : d.side0] = face_p
            sides = self.mesh.fracture_sides.ravel()
            if self.continuous:
                x[d.side0 : d.node0] = np.repeat(face_p, 2, axis=0)
            else:
                x[d.side0 : d.node0] = cell_p[sides]
            for i, faces in enumerate(self._node_faces):
                x[d.node0 + i] = face_p[faces].mean(axis=0)
        return x.ravel()


def single_phase_system(mesh: Mesh, conductivity: float, dirichlet, source=None, axisymmetric=False):
    """TPFA system ``A p = b`` for ``-div(k grad p) = f`` with Dirichlet data
    on the whole boundary (fracture edges are ignored).

    Parameters
    ----------
    dirichlet : callable
        ``points (n, 2) -> values``, evaluated at boundary edge midpoints.
    source : ndarray, optional
        Integrated source per cell.
    """
    vol, meas = measures(mesh, axisymmetric)
    nc = mesh.n_cells
    interior = mesh.edge_cells[:, 1] >= 0
    ie = np.flatnonzero(interior)
    kc, lc = mesh.edge_cells[ie, 0], mesh.edge_cells[ie, 1]
    dk = mesh.cell_edge_distances[kc, mesh.edge_local[ie, 0]]
    dl = mesh.cell_edge_distances[lc, mesh.edge_local[ie, 1]]
    t = conductivity * meas[ie] / (dk + dl)
    be = np.flatnonzero(~interior)
    bk = mesh.edge_cells[be, 0]
    tb = conductivity * meas[be] / mesh.cell_edge_distances[bk, mesh.edge_local[be, 0]]
    rows = np.concatenate([kc, lc, kc, lc, bk])
    cols = np.concatenate([kc, lc, lc, kc, bk])
    vals = np.concatenate([t, t, -t, -t, tb])
    A = sps.csr_matrix((vals, (rows, cols)), shape=(nc, nc))
    b = np.zeros(nc) if source is None else np.array(source, dtype=float)
    np.add.at(b, bk, tb * dirichlet(mesh.edge_midpoint[be]))
    return A, b
