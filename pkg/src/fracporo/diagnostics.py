"""Per-step diagnostics: energy norms, dissipation, mass balance and the
chord inequality of the capillary energy.

A :class:`DiagnosticLog` is an append-only table with a fixed column order;
one record is produced for the initial state and one per accepted step.
"""

from __future__ import annotations

import numpy as np

from .coupling import CoupledProblem, CoupledState, StepInfo
from .flow import K_BC_MATRIX, K_HALF, K_INTERFACE, K_MATRIX, K_TANGENTIAL, NW, W, FlowClosures

__all__ = ["DiagnosticLog", "COLUMNS", "ENERGY_COLUMNS", "step_record", "initial_record"]

# norms monitored for finiteness
ENERGY_COLUMNS = (
    "grad_p_sq",
    "frac_grad_p_sq",
    "jump_sq",
    "pE_norm",
    "strain_norm",
    "aperture_l4",
    "capillary_energy",
    "elastic_energy",
)

COLUMNS = (
    ("step", "t", "dt")
    + ENERGY_COLUMNS
    + (
        "interface_dissipation_nw",
        "interface_dissipation_w",
        "dissipation",
        "dissipation_cum",
        "chord_min",
        "mass_nw",
        "mass_w",
        "injected_nw",
        "injected_w",
        "mass_defect_nw",
        "mass_defect_w",
        "s_nw_min",
        "s_nw_max",
        "phi_min",
        "d_f_min",
    )
)


class DiagnosticLog:
    """Append-only list of diagnostic records."""

    def __init__(self):
        self._rows: list[tuple] = []

    def append(self, record: dict) -> None:
        missing = set(COLUMNS) - set(record)
        if missing:
            raise KeyError(f"diagnostic record misses {sorted(missing)}")
        self._rows.append(tuple(float(record[c]) for c in COLUMNS))

    def __len__(self):
        return len(self._rows)

    def __getitem__(self, i) -> dict:
        return dict(zip(COLUMNS, self._rows[i]))

    def column(self, name: str) -> np.ndarray:
        j = COLUMNS.index(name)
        return np.array([r[j] for r in self._rows])

    def rows(self) -> list[tuple]:
        return list(self._rows)

    @property
    def last(self) -> dict:
        return self[-1]


def _far_pressures(flow, p):
    """Pressures at the second endpoint of every connection (Dirichlet
    states for boundary connections)."""
    p1 = p[flow.c_e1_safe].copy()
    if np.any(flow.c_is_bc):
        p1[flow.c_is_bc] = flow.bc_p[flow.c_bc[flow.c_is_bc]]
    return p1


def _energy_norms(problem: CoupledProblem, state: CoupledState) -> dict:
    flow, mech = problem.flow, problem.mech
    d = flow.dofs
    p = state.x.reshape(-1, 2)
    kind = flow.c_kind
    T = flow.c_T.copy()
    if flow.n_connections > flow.n_static:
        T[flow.tan_slice] = flow.tangential_T(state.d_f)
    dp2 = ((p[flow.c_e0] - _far_pressures(flow, p)) ** 2).sum(axis=1)
    mat = np.isin(kind, (K_MATRIX, K_HALF, K_BC_MATRIX))
    grad = float(np.sum(T[mat] / flow.permeability * dp2[mat]))
    tan = kind == K_TANGENTIAL
    frac = float(np.sum(12.0 * T[tan] * dp2[tan]))
    jumps = flow.interface_jumps(state.x) if d.n_faces and not flow.continuous else np.zeros((0, 2, 2))
    jump = float(np.sum(flow.face_measure[:, None, None] * jumps**2)) if len(jumps) else 0.0
    vol = flow.cell_volume
    eps = mech.cell_strain(state.u - problem.u0)
    eps_sq = eps[:, 0] ** 2 + eps[:, 1] ** 2 + eps[:, 2] ** 2 + 2 * eps[:, 3] ** 2
    du = state.u - problem.u0
    _, _, _, _, _, U = flow.entity_state(state.x)
    pv = flow.pore_volumes(state.x, FlowClosures(state.phi_ref, state.d_f, problem.pE0))
    return {
        "grad_p_sq": grad,
        "frac_grad_p_sq": frac,
        "jump_sq": jump,
        "pE_norm": float(np.sqrt(np.sum(vol * state.pE_m**2))),
        "strain_norm": float(np.sqrt(np.sum(vol * eps_sq))),
        "aperture_l4": float(np.sum(flow.face_measure * state.d_f**4) ** 0.25) if d.n_faces else 0.0,
        "capillary_energy": float(np.sum(pv * U)),
        "elastic_energy": float(0.5 * du @ (mech.K @ du)),
    }


def _bounds(problem, state) -> dict:
    _, _, _, s, _, _ = problem.flow.entity_state(state.x)
    return {
        "s_nw_min": float(s.min()),
        "s_nw_max": float(s.max()),
        "phi_min": float(state.phi.min()),
        "d_f_min": float(state.d_f.min()) if len(state.d_f) else 0.0,
    }


def initial_record(problem: CoupledProblem, state: CoupledState) -> dict:
    """Record of the initial state; step quantities are zero."""
    flow = problem.flow
    mass = flow.masses(state.x, FlowClosures(state.phi_ref, state.d_f, problem.pE0)).sum(axis=0)
    rec = {c: 0.0 for c in COLUMNS}
    rec.update(step=state.step, t=state.t, mass_nw=mass[NW], mass_w=mass[W])
    rec.update(_energy_norms(problem, state))
    rec.update(_bounds(problem, state))
    return rec


def chord_defect(problem: CoupledProblem, prev: CoupledState, new: CoupledState) -> np.ndarray:
    """Per-entity ``[p_c (S - S_prev) - (U - U_prev)] / R`` (non-negative in
    exact arithmetic since ``S`` is non-decreasing)."""
    flow = problem.flow
    _, _, _, s0, _, u0 = flow.entity_state(prev.x)
    _, _, pc, s1, _, u1 = flow.entity_state(new.x)
    R = np.array([r.saturation.R for r in flow.rocks])[flow.entity_rock]
    return (pc * (s1 - s0) - (u1 - u0)) / R


def step_record(problem: CoupledProblem, prev: CoupledState, new: CoupledState, info: StepInfo, previous: dict) -> dict:
    """Record of an accepted step; ``previous`` is the preceding record."""
    flow = problem.flow
    fi = info.flow_info
    dt = info.dt
    F = fi["F"]
    p = new.x.reshape(-1, 2)
    is_bc = flow.c_is_bc
    p1 = _far_pressures(flow, p)
    dissipation = float(dt * np.sum(F * (p[flow.c_e0] - p1)))
    inter = flow.c_kind == K_INTERFACE
    q_dp = (F[inter] * (p[flow.c_e0[inter]] - p1[inter])).sum(axis=0) if np.any(inter) else np.zeros(2)

    mass = fi["mass"].sum(axis=0)
    mass_prev = fi["mass_prev"].sum(axis=0)
    src = dt * flow.source.sum(axis=0)
    outflow = dt * F[is_bc].sum(axis=0) if np.any(is_bc) else np.zeros(2)
    floor = 1e-12 * float(np.sum(flow.cell_volume * problem.phi0))
    defect = np.abs(mass - mass_prev - src + outflow) / np.maximum(mass, floor)

    rec = {
        "step": new.step,
        "t": new.t,
        "dt": dt,
        "interface_dissipation_nw": q_dp[NW],
        "interface_dissipation_w": q_dp[W],
        "dissipation": dissipation,
        "dissipation_cum": previous["dissipation_cum"] + dissipation,
        "chord_min": float(chord_defect(problem, prev, new).min()),
        "mass_nw": mass[NW],
        "mass_w": mass[W],
        "injected_nw": previous["injected_nw"] + src[NW],
        "injected_w": previous["injected_w"] + src[W],
        "mass_defect_nw": defect[NW],
        "mass_defect_w": defect[W],
    }
    rec.update(_energy_norms(problem, new))
    rec.update(_bounds(problem, new))
    return rec
