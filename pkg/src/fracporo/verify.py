"""Verification suite: constitutive oracles, Jacobian check, conservation
and energy monitors, manufactured-solution convergence studies and the
barrier-effect demonstration.

Every check returns plain data; :func:`verification_report` gathers results
into a machine-readable table of ``{"name", "passed", "value", "limit"}``
records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.integrate as integrate
import scipy.sparse.linalg as spla

from .coupling import DAY
from .diagnostics import ENERGY_COLUMNS, DiagnosticLog
from .flow import K_HALF, W, single_phase_system
from .mech import TRI7_POINTS, TRI7_WEIGHTS, Elasticity, MechBC, p2_shape
from .mesh import BOUNDARY_SIDES, build_mesh, measures, uniform_breaks
from .rockphys import SaturationLaw
from .scenarios import FlowBoundary, LawSpec, MeshSpec, Problem, RunResult, Scenario, build_problem, run_scenario

__all__ = [
    "DiagnosticLog",
    "reference_saturation",
    "reference_capillary_energy",
    "reference_equivalent_pressure",
    "constitutive_check",
    "jacobian_check",
    "mass_balance_check",
    "energy_check",
    "manufactured_convergence",
    "quadratic_patch_test",
    "barrier_scenario",
    "BarrierReport",
    "barrier_effect_demo",
    "energy_bound_ratio",
    "annulus_mean_s_nw",
    "tunnel_run",
    "closed_run",
    "verification_report",
]


# -- constitutive oracles -------------------------------------------------


def reference_saturation(pc: float, R: float) -> float:
    """Corey saturation from the closed form, evaluated with :mod:`math`."""
    return -math.expm1(-pc / R) if pc > 0 else 0.0


def reference_capillary_energy(pc: float, R: float) -> float:
    """``int_0^pc q S'(q) dq`` by adaptive quadrature."""
    if pc <= 0:
        return 0.0
    # in the scaled variable x = q / R the integrand is x exp(-x)
    value, _ = integrate.quad(lambda x: x * math.exp(-x), 0.0, pc / R, epsabs=0.0, epsrel=1e-13, limit=200)
    return R * value


def reference_equivalent_pressure(p_nw: float, p_w: float, R: float) -> float:
    s = reference_saturation(p_nw - p_w, R)
    return p_nw * s + p_w * (1.0 - s) - reference_capillary_energy(p_nw - p_w, R)


def constitutive_check(n: int = 100, seed: int = 0, scales=(10.0, 1e4, 2e8)) -> dict:
    """Largest relative deviation of the library laws from the oracles.

    ``n`` random capillary pressures in ``[0, 20 R]`` and pressure pairs
    are drawn per scale ``R``.
    """
    from .rockphys import capillary_energy, equivalent_pressure, saturation

    rng = np.random.default_rng(seed)
    worst = {"saturation": 0.0, "capillary_energy": 0.0, "equivalent_pressure": 0.0}

    def rel(a, b):
        return float(abs(a - b) / max(abs(b), 1e-300))

    for R in scales:
        law = SaturationLaw("corey", R)
        pc = rng.uniform(0.0, 20.0 * R, n)
        s = saturation(law, pc)
        u = capillary_energy(law, pc)
        p_w = rng.uniform(1e4, 1e7, n)
        pe = equivalent_pressure(p_w + pc, p_w, law)
        for i in range(n):
            worst["saturation"] = max(worst["saturation"], rel(s[i], reference_saturation(pc[i], R)))
            worst["capillary_energy"] = max(worst["capillary_energy"], rel(u[i], reference_capillary_energy(pc[i], R)))
            ref = reference_equivalent_pressure(p_w[i] + pc[i], p_w[i], R)
            worst["equivalent_pressure"] = max(worst["equivalent_pressure"], rel(pe[i], ref))
    return worst


# -- Jacobian ----------------------------------------------------------------


def _first_step_state(problem: Problem):
    """Flow state, closures and previous masses of the accepted first step."""
    state = problem.initial_state()
    new, info = problem.coupled.advance_step(state, problem.scenario.dt_init)
    fi = info.flow_info
    return new.x, fi["closures"], fi["mass_prev"]


def jacobian_check(problem: Problem, n_directions: int = 5, seed: int = 0, eps: float = 1e-3) -> float:
    """Largest relative mismatch between ``J v`` and a finite-difference
    directional derivative of the row-scaled residual.

    The check runs at the converged first-step flow state with the upwind
    directions frozen, since upwinding is not differentiable where a
    pressure difference vanishes. The liquid pressure moves on the scale
    of each entity's capillary law; the capillary pressure moves by at most
    half its current value (steps are at most ``eps <= 1``), so the
    ``p_c = 0`` kink is never crossed. Entities on the kink move to
    ``p_c > 0``, matching the right derivative used by the Jacobian, except
    under van Genuchten mobilities whose slope there is not Lipschitz; those
    keep ``p_c`` fixed.
    The forward difference is Richardson extrapolated. The accumulation
    floor on ``dS/dp_c`` is switched off for the check.
    """
    flow = problem.flow
    dt = problem.scenario.dt_init
    x, cl, mass_prev = _first_step_state(problem)
    floor = flow.saturation_floor
    flow.saturation_floor = 0.0
    try:
        scale = flow.row_scale(cl, dt)
        R0, J, info = flow.assemble(x, cl, dt, mass_prev)
        upwind = info["upwind"]
        _, _, pc, _, _, _ = flow.entity_state(x)
        kink = pc <= 0.0
        rng = np.random.default_rng(seed)
        R_law = np.array([r.saturation.R for r in flow.rocks])[flow.entity_rock]
        # capillary perturbations stay within half of the current p_c so the
        # kink is never crossed; entities on the kink move to p_c > 0 only
        # van Genuchten mobilities are only Hoelder continuous at the kink, so
        # a difference quotient there cannot approach the one-sided slope
        smooth = np.array([r.mobility_nw.kind != "van_genuchten_over_mu" for r in flow.rocks])[flow.entity_rock]
        pc_amp = np.where(kink, np.where(smooth, 1e-6 * R_law, 0.0), 0.5 * np.minimum(pc, R_law))
        worst = 0.0
        for _ in range(n_directions):
            v = np.empty((flow.dofs.n_entities, 2))
            v[:, W] = rng.standard_normal(len(pc)) * R_law
            dpc = np.clip(rng.standard_normal(len(pc)), -1.0, 1.0) * pc_amp
            v[:, 0] = v[:, W] + np.where(kink, np.abs(dpc), dpc)
            v = v.ravel()

            def d(h):
                R1, _, _ = flow.assemble(x + h * v, cl, dt, mass_prev, jacobian=False, upwind=upwind)
                return scale * (R1 - R0) / h

            fd = 2.0 * d(eps / 2) - d(eps)
            jv = scale * (J @ v)
            worst = max(worst, float(np.linalg.norm(jv - fd) / np.linalg.norm(jv)))
        return worst
    finally:
        flow.saturation_floor = floor


# -- run monitors ------------------------------------------------------------


def mass_balance_check(run: RunResult) -> dict:
    """Largest per-step relative mass defect of each phase.

    Returns ``{"status": "checked" | "skipped", "nw": ..., "w": ...}``;
    runs with Dirichlet flow boundaries are skipped because their boundary
    fluxes are not a closed balance.
    """
    if run.scenario.flow_bc:
        return {"status": "skipped", "reason": "flow boundary has Dirichlet data", "nw": None, "w": None}
    log = run.log
    if len(log) < 2:
        return {"status": "checked", "nw": 0.0, "w": 0.0, "steps": 0}
    return {
        "status": "checked",
        "nw": float(log.column("mass_defect_nw")[1:].max()),
        "w": float(log.column("mass_defect_w")[1:].max()),
        "steps": len(log) - 1,
    }


def energy_check(log: DiagnosticLog, chord_slack: float = 1e-12) -> dict:
    """Dissipation signs, chord inequality and finiteness over a log."""
    rows = log.rows()
    steps = rows[1:]
    out = {
        "min_interface_dissipation": 0.0,
        "min_dissipation": 0.0,
        "min_chord": 0.0,
        "all_finite": bool(np.all(np.isfinite(np.array(rows)))),
    }
    if steps:
        out["min_interface_dissipation"] = float(
            min(log.column("interface_dissipation_nw")[1:].min(), log.column("interface_dissipation_w")[1:].min())
        )
        out["min_dissipation"] = float(log.column("dissipation")[1:].min())
        out["min_chord"] = float(log.column("chord_min")[1:].min())
    out["norms_finite"] = bool(all(np.all(np.isfinite(log.column(c))) for c in ENERGY_COLUMNS))
    out["passed"] = (
        out["min_interface_dissipation"] >= 0
        and out["min_dissipation"] >= 0
        and out["min_chord"] >= -chord_slack
        and out["all_finite"]
        and out["norms_finite"]
    )
    return out


def energy_bound_ratio(run: RunResult) -> float:
    """``max_t (dissipation + capillary + elastic energy) / data norm``.

    The data norm is ``p_ref (V_por + injected volume)`` where ``p_ref`` is
    the largest absolute initial or boundary pressure; the ratio is compared
    with a frozen per-scenario constant.
    """
    sc = run.scenario
    log = run.log
    p_ref = max(abs(sc.initial_p_nw), abs(sc.initial_p_w), *(abs(b.pressure) for b in sc.flow_bc.values()), 1.0)
    v_por = float(np.sum(run.problem.flow.cell_volume) * sc.porosity)
    injected = float(log.column("injected_nw")[-1] + log.column("injected_w")[-1])
    total = log.column("dissipation_cum") + log.column("capillary_energy") + log.column("elastic_energy")
    return float(total.max() / (p_ref * (v_por + injected)))


# -- manufactured solutions ----------------------------------------------------


def _square_mesh(n):
    b = uniform_breaks(0.0, 1.0, 1.0 / n)
    return build_mesh((0.0, 1.0, 0.0, 1.0), (), x_breaks=b, y_breaks=b)


def _cell_integral(mesh, fn):
    """``int_K fn`` per triangle with the 7-point rule."""
    v = mesh.vertices[mesh.cells]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    xq = v[:, 0][:, None, :] + TRI7_POINTS[None, :, 0, None] * e1[:, None, :] + TRI7_POINTS[None, :, 1, None] * e2[:, None, :]
    vals = fn(xq.reshape(-1, 2)).reshape(len(v), -1)
    return mesh.area * (vals @ TRI7_WEIGHTS)


def _darcy_error(n):
    mesh = _square_mesh(n)
    k = 1.0

    def exact(p):
        return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])

    src = _cell_integral(mesh, lambda p: 2 * np.pi**2 * k * exact(p))
    A, b = single_phase_system(mesh, k, exact, src)
    p = spla.spsolve(A.tocsc(), b)
    vol, _ = measures(mesh)
    err = np.sqrt(np.sum(vol * (p - exact(mesh.center)) ** 2))
    return 1.0 / n, err


def _elastic_exact(lam, mu):
    pi = np.pi

    def u(p):
        s = np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])
        return np.stack([s, s], axis=1)

    def f(p):
        s = np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])
        c = np.cos(pi * p[:, 0]) * np.cos(pi * p[:, 1])
        g = (lam + mu) * pi**2 * (s - c) + 2 * mu * pi**2 * s
        return np.stack([g, g], axis=1)

    return u, f


def _solve_dirichlet(mech: Elasticity, exact):
    """Solve with ``u = exact`` on every node of the boundary sides."""
    fixed = mech.fixed
    u = np.zeros(mech.dofs.n_dofs)
    vals = exact(mech.dofs.coords)
    u[0::2][fixed[0::2]] = vals[fixed[0::2], 0]
    u[1::2][fixed[1::2]] = vals[fixed[1::2], 1]
    free = mech.free
    rhs = mech.f_const[free] - mech.K[free] @ u
    u[free] = mech.factorize().solve(rhs)
    return u


def _l2_error(mech: Elasticity, u, exact):
    mesh = mech.mesh
    N, _ = p2_shape(TRI7_POINTS[:, 0], TRI7_POINTS[:, 1])
    v = mesh.vertices[mesh.cells]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    xq = v[:, 0][:, None, :] + TRI7_POINTS[None, :, 0, None] * e1[:, None, :] + TRI7_POINTS[None, :, 1, None] * e2[:, None, :]
    ue = u[mech.dofs.cell_dofs].reshape(-1, 6, 2)
    uh = np.einsum("qa,kac->kqc", N, ue)
    ex = exact(xq.reshape(-1, 2)).reshape(uh.shape)
    w = mesh.area[:, None] * TRI7_WEIGHTS[None, :]
    return float(np.sqrt(np.sum(w[..., None] * (uh - ex) ** 2)))


def _clamped():
    return {side: MechBC(0.0, 0.0) for side in BOUNDARY_SIDES}


def _elastic_error(n, lam=1.0, mu=1.0):
    mesh = _square_mesh(n)
    u_ex, f = _elastic_exact(lam, mu)
    mech = Elasticity(mesh, lam, mu, bcs=_clamped(), body_force=f)
    u = _solve_dirichlet(mech, u_ex)
    return 1.0 / n, _l2_error(mech, u, u_ex)


def _slope(hs, errs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def manufactured_convergence(problem: str, levels=(8, 16, 32)) -> dict:
    """Observed L2 order on structured meshes of the unit square.

    ``problem`` is ``"darcy_single_phase"`` (``p = sin(pi x) sin(pi y)``,
    cell-centre errors of the two-point scheme) or ``"elasticity_plane"``
    (``u = (s, s)`` with ``s = sin(pi x) sin(pi y)``, quadratic elements).
    Returns ``{"h", "errors", "order"}`` with the least-squares slope.
    """
    if problem == "darcy_single_phase":
        data = [_darcy_error(n) for n in levels]
    elif problem == "elasticity_plane":
        data = [_elastic_error(n) for n in levels]
    else:
        raise ValueError(f"unknown manufactured problem {problem!r}")
    hs, errs = zip(*data)
    return {"h": list(hs), "errors": list(errs), "order": _slope(hs, errs)}


def quadratic_patch_test(n: int = 4, lam: float = 2.0, mu: float = 1.5, coefficients=None) -> float:
    """Largest nodal error for an exact quadratic displacement field.

    ``coefficients`` is a (2, 6) array for ``u_c = sum a_c,j m_j`` over the
    monomials ``1, x, y, x^2, xy, y^2``; a fixed field is used by default.
    """
    if coefficients is None:
        coefficients = [[0.1, -0.2, 0.3, 0.25, -0.15, 0.05], [-0.05, 0.2, 0.1, -0.3, 0.2, 0.15]]
    a, b = np.asarray(coefficients, dtype=float)

    def exact(p):
        x, y = p[:, 0], p[:, 1]
        basis = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=1)
        return np.stack([basis @ a, basis @ b], axis=1)

    # constant second derivatives give a constant body force -div sigma
    ux_xx, ux_xy, ux_yy = 2 * a[3], a[4], 2 * a[5]
    uy_xx, uy_xy, uy_yy = 2 * b[3], b[4], 2 * b[5]
    fx = -((lam + 2 * mu) * ux_xx + mu * ux_yy + (lam + mu) * uy_xy)
    fy = -((lam + 2 * mu) * uy_yy + mu * uy_xx + (lam + mu) * ux_xy)
    mesh = _square_mesh(n)
    mech = Elasticity(mesh, lam, mu, bcs=_clamped(), body_force=lambda p: np.tile([fx, fy], (len(p), 1)))
    u = _solve_dirichlet(mech, exact)
    ref = exact(mech.dofs.coords)
    return float(max(np.abs(u[0::2] - ref[:, 0]).max(), np.abs(u[1::2] - ref[:, 1]).max()))


# -- barrier effect ------------------------------------------------------------


def barrier_scenario(model: str = "discontinuous", gas_filled: bool = True) -> Scenario:
    """Strip ``[0, 1] x [0, 0.25]`` crossed by a fracture at ``x = 0.5``.

    Liquid is driven from left to right by a 1 bar drop. The fracture is
    initially gas filled (``s_nw = 1 - 1e-6``) or, with
    ``gas_filled=False``, liquid filled as a control. The interface
    transmissivity ``k / 1 mm`` does not limit liquid-filled crossing.
    """
    p0 = 1e5
    matrix = LawSpec(R=1e4, mobility="quadratic_over_mu")
    fracture = LawSpec(R=10.0, mobility="linear_over_mu")
    pc_f = -fracture.R * math.log(1e-6) if gas_filled else 0.0
    return Scenario(
        name="barrier_strip",
        domain=(0.0, 1.0, 0.0, 0.25),
        fractures=(((0.5, 0.0), (0.5, 0.25)),),
        mesh=MeshSpec(h=1.0 / 16),
        model=model,
        permeability=1e-15,
        porosity=0.2,
        lame_lambda=833e6,
        lame_mu=1250e6,
        biot=0.81,
        biot_modulus=18.4e9,
        normal_transmissivity=1e-12,
        aperture_offset=1e-3,
        laws={"m": matrix, "f": fracture, "plus": matrix, "minus": matrix},
        flow_bc={
            "left": FlowBoundary(matrix=True, phase="w", pressure=p0 + 1e5),
            "right": FlowBoundary(matrix=True, phase="w", pressure=p0),
        },
        mech_bc=_clamped(),
        initial_p_nw=p0,
        initial_p_w=p0,
        initial_fracture_p_nw=p0 + pc_f,
        initial_fracture_p_w=p0,
        t_final=3600.0,
        dt_init=1.0,
        dt_max=180.0,
        growth=1.5,
        snapshots=0,
    )


@dataclass
class BarrierReport:
    """Liquid crossing fluxes into the downstream half (m^3/s per unit
    thickness, averaged over the run), the mean liquid-pressure jump across
    the upstream interface (Pa) and the final mean fracture ``s_nw``.
    ``flux_liquid_filled`` is the discontinuous-mode control run."""

    flux_discontinuous: float
    flux_continuous: float
    flux_liquid_filled: float
    jump_discontinuous: float
    jump_continuous: float
    fracture_s_nw: float

    @property
    def flux_ratio(self) -> float:
        return self.flux_discontinuous / self.flux_continuous

    @property
    def passed(self) -> bool:
        return self.jump_discontinuous > 0 and self.flux_discontinuous < self.flux_continuous


def _crossing(problem: Problem):
    """Liquid volume entering the downstream half, accumulated per step."""
    flow = problem.flow
    mesh = problem.mesh
    half = flow.c_kind == K_HALF
    right = np.zeros(flow.n_connections, dtype=bool)
    right[half] = mesh.centroid[flow.c_e0[half], 0] > 0.5
    total = [0.0]

    def on_step(prev, new, info):
        # half connections are oriented from the cell to the interface
        total[0] += -info.dt * float(info.flow_info["F"][right, W].sum())

    return total, on_step


def _barrier_run(model, gas_filled=True):
    problem = build_problem(barrier_scenario(model, gas_filled))
    total, on_step = _crossing(problem)
    state = problem.coupled.run(problem.x0, problem.controller(), on_step=on_step)
    flow = problem.flow
    d = flow.dofs
    jump = 0.0
    if not flow.continuous:
        # liquid pressure drop from the upstream side to the fracture
        p = state.x.reshape(-1, 2)
        faces = np.arange(d.n_faces)
        left = problem.mesh.centroid[problem.mesh.fracture_sides[:, 0], 0] < 0.5
        up = np.where(left, d.side(faces, 0), d.side(faces, 1))
        jump = float(np.mean(p[up, W] - p[d.face0 + faces, W]))
    _, _, _, s, _, _ = flow.entity_state(state.x)
    return total[0] / state.t, jump, float(np.mean(s[d.face0 : d.side0]))


def barrier_effect_demo() -> BarrierReport:
    """Run the strip in both models, plus a liquid-filled control."""
    flux_d, jump_d, s_f = _barrier_run("discontinuous")
    flux_c, jump_c, _ = _barrier_run("continuous")
    flux_l, _, _ = _barrier_run("discontinuous", gas_filled=False)
    return BarrierReport(flux_d, flux_c, flux_l, jump_d, jump_c, s_f)


# -- scenario observables -------------------------------------------------------


def annulus_mean_s_nw(problem: Problem, x, width: float = 2.0) -> float:
    """Volume-weighted mean matrix ``s_nw`` over cells whose centroid lies
    within ``width`` of the inner radius (the bottom side)."""
    mesh = problem.mesh
    r0 = mesh.domain[2]
    inner = mesh.centroid[:, 1] < r0 + width
    _, _, _, s, _, _ = problem.flow.entity_state(x)
    vol = problem.flow.cell_volume
    return float(np.sum(vol[inner] * s[: mesh.n_cells][inner]) / np.sum(vol[inner]))


def tunnel_run(model: str = "discontinuous", refine: int = 0) -> tuple[RunResult, np.ndarray]:
    """Gallery desaturation run and its inner-annulus ``s_nw`` history
    (initial state first)."""
    from .scenarios import builtin_scenario

    sc = replace(builtin_scenario("tunnel_desaturation"), model=model)
    history = []
    run = run_scenario(sc, refine=refine, on_step=lambda pb, st: history.append(annulus_mean_s_nw(pb, st.x)))
    first = annulus_mean_s_nw(run.problem, run.problem.x0)
    return run, np.array([first] + history)


# -- report --------------------------------------------------------------------


def verification_report(results: list, path=None) -> str:
    """JSON text of ``[{"name", "passed", "value", "limit"}, ...]``;
    written to ``path`` when given."""
    from .output import atomic_write

    text = json.dumps(results, indent=2, default=float) + "\n"
    if path is not None:
        atomic_write(path, text)
    return text


def closed_run(name: str = "gas_injection_cross", steps: int = 50, refine: int = -1, mass_tol: float = 1e-11) -> RunResult:
    """Closed-boundary variant of a builtin run for the conservation check.

    Newton additionally requires each phase's mass defect to be below
    ``mass_tol`` times the phase mass.
    """
    from .scenarios import builtin_scenario, closed_variant

    sc = closed_variant(builtin_scenario(name))
    sc = replace(sc, newton=replace(sc.newton, mass_tol=mass_tol), snapshots=0)
    return run_scenario(sc, refine=refine, max_steps=steps)
