"""Time integration of the coupled flow-mechanics system.

Each implicit Euler step solves the fixed point ``u = G(u)`` where ``G``
freezes the porosity and aperture closures at ``u``, solves the two-phase flow
system by Newton's method, and solves the mechanics with the resulting
equivalent pressures. The fixed point is accelerated by Newton-Krylov.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Abort, BoundViolation, ClosureError, LinearSolveError, NonConvergence
from .flow import FlowClosures, FlowModel
from .mech import Elasticity
from .solvers import (
    FixedPointConfig,
    GmresConfig,
    NewtonConfig,
    SolverCounters,
    gmres,
    make_preconditioner,
    newton_krylov_fixed_point,
    newton_solve,
    sparse_lu,
)

__all__ = ["TimeController", "CoupledState", "CoupledProblem", "schedule_step_count"]

DAY = 86400.0

log = logging.getLogger(__name__)


class TimeController:
    """Adaptive step size: grow by ``growth`` after success, divide by
    ``chop_factor`` after failure, never exceed ``dt_max``, end exactly at
    ``t_final``.
    """

    def __init__(self, t_final, dt_init, dt_max, growth=1.1, chop_factor=2.0, dt_min=1e-9 * DAY):
        if dt_init <= 0 or dt_max <= 0 or growth < 1 or chop_factor <= 1 or dt_min <= 0:
            raise ValueError("invalid time stepping parameters")
        self.t_final = float(t_final)
        self.dt = min(float(dt_init), float(dt_max))
        self.dt_max = float(dt_max)
        self.growth = growth
        self.chop_factor = chop_factor
        self.dt_min = dt_min

    def done(self, t):
        return t >= self.t_final * (1 - 1e-14) or self.t_final <= 0

    def step(self, t):
        """Step size to use from time ``t`` and whether it is the last one."""
        remaining = self.t_final - t
        if self.dt >= remaining * (1 - 1e-12):
            return remaining, True
        return self.dt, False

    def accept(self):
        self.dt = min(self.growth * self.dt, self.dt_max)

    def chop(self):
        self.dt /= self.chop_factor
        if self.dt < self.dt_min:
            raise Abort(f"time step {self.dt:.3g} s fell below the floor {self.dt_min:.3g} s")


def schedule_step_count(t_final, dt_init, dt_max, growth=1.1):
    """Number of steps the controller takes to reach ``t_final`` without chops."""
    ctl = TimeController(t_final, dt_init, dt_max, growth)
    t, n = 0.0, 0
    while not ctl.done(t):
        dt, last = ctl.step(t)
        t = ctl.t_final if last else t + dt
        ctl.accept()
        n += 1
    return n


@dataclass
class CoupledState:
    """Accepted state at time ``t``."""

    t: float
    x: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    d_f: np.ndarray
    pE_m: np.ndarray
    pE_f: np.ndarray
    phi_ref: np.ndarray
    step: int = 0


@dataclass
class StepInfo:
    dt: float
    newton: int = 0
    gmres: int = 0
    gmres_nk: int = 0
    nk: int = 0
    flow_info: dict = field(default_factory=dict)


class CoupledProblem:
    """Flow and mechanics operators plus the reference state.

    Parameters
    ----------
    flow : FlowModel
    mech : Elasticity
    phi0 : float or ndarray
        Initial matrix porosity.
    aperture_offset : float or None
        If given, ``d_f = offset + A (u - u0)`` so that ``d_f(u0) = offset``;
        otherwise ``d_f = A u``.
    newton, gmres_cfg, fixed_point : solver configurations.
    phi_min, d0 : float or None
        Optional lower bounds asserted on accepted states.
    """

    def __init__(
        self,
        flow: FlowModel,
        mech: Elasticity,
        phi0,
        aperture_offset=None,
        newton: NewtonConfig = NewtonConfig(),
        gmres_cfg: GmresConfig = GmresConfig(),
        fixed_point: FixedPointConfig = FixedPointConfig(),
        phi_min=None,
        d0=None,
    ):
        self.flow = flow
        self.mech = mech
        self.phi0 = np.broadcast_to(np.asarray(phi0, dtype=float), (flow.dofs.n_cells,)).copy()
        self.aperture_offset = aperture_offset
        self.newton_cfg = newton
        self.gmres_cfg = gmres_cfg
        self.fp_cfg = fixed_point
        self.phi_min = phi_min
        self.d0 = d0
        self.counters = SolverCounters()
        self.u0 = None
        self.pE0 = None

    # -- closures -----------------------------------------------------

    def closures(self, u) -> FlowClosures:
        du = u - self.u0
        phi_ref = self.phi0 + self.mech.biot * self.mech.divergence(du)
        if self.aperture_offset is None:
            d_f = self.mech.aperture(u)
        else:
            d_f = self.aperture_offset + self.mech.aperture(du)
        return FlowClosures(phi_ref, d_f, self.pE0)

    def initial_state(self, x0) -> CoupledState:
        """Static mechanics solve for the initial pressures."""
        x0 = np.asarray(x0, dtype=float)
        pE_m, pE_f = self.flow.equivalent_pressures(x0)
        self.pE0 = pE_m.copy()
        u0 = self.mech.solve_pressure(pE_m, pE_f)
        self.u0 = u0.copy()
        cl = self.closures(u0)
        self.flow.check_closures(cl)
        return CoupledState(0.0, x0.copy(), u0, self.phi0.copy(), cl.d_f, pE_m, pE_f, cl.phi_ref)

    # -- flow solve ---------------------------------------------------

    def _linear_solver(self, counter_attr):
        cfg = self.gmres_cfg

        def solve(J, rhs):
            prec = make_preconditioner(J, cfg.preconditioner)
            res = gmres(J, rhs, prec, tol=cfg.tol, restart=cfg.restart, max_iters=cfg.max_iters, raise_on_failure=False)
            setattr(self.counters, counter_attr, getattr(self.counters, counter_attr) + res.iterations)
            if not res.converged:
                # inexact Newton: accept a linear residual within the forcing term
                rel = np.linalg.norm(rhs - J @ res.x) / np.linalg.norm(rhs)
                if not rel <= cfg.forcing:
                    raise NonConvergence(f"GMRES stopped at relative residual {rel:.3g}")
            return res.x, res.iterations

        return solve

    def solve_flow(self, x_guess, closures, dt, mass_prev, cfg: NewtonConfig | None = None):
        """Newton solve of the flow step for frozen closures."""
        flow = self.flow
        scale = flow.row_scale(closures, dt)

        def fn(x):
            R, J, _ = flow.assemble(x, closures, dt, mass_prev)
            return scale * R, J.multiply(scale[:, None]).tocsr()

        cfg = cfg or self.newton_cfg
        accept = None
        if cfg.mass_tol is not None:
            # interior fluxes cancel, so the phase sums of R are the mass defects
            floor = 1e-12 * flow.cell_volume.sum() * float(np.mean(closures.phi_ref))

            def accept(x, Rs):
                R = (Rs / scale).reshape(-1, 2)
                mass = flow.masses(x, closures).sum(axis=0)
                return bool(np.all(np.abs(R.sum(axis=0)) <= cfg.mass_tol * np.maximum(mass, floor)))

        res = newton_solve(
            fn, None, x_guess, cfg, linear_solve=self._linear_solver("n_gmres"), update=flow.newton_update, accept=accept
        )
        self.counters.n_newton += res.iterations
        return res

    # -- one time step ------------------------------------------------

    def advance_step(self, state: CoupledState, dt: float) -> tuple[CoupledState, StepInfo]:
        """Advance one implicit step; raises NonConvergence on failure."""
        flow, mech = self.flow, self.mech
        prev_closures = FlowClosures(state.phi_ref, state.d_f, self.pE0)
        mass_prev = flow.masses(state.x, prev_closures)
        cache = {"x": state.x.copy()}
        before = replace(self.counters)

        def G(u):
            cl = self.closures(u)
            res = self.solve_flow(cache["x"], cl, dt, mass_prev)
            x = res.x
            cache.update(x=x, u=u.copy(), cl=cl, lin=None)
            pE_m, pE_f = flow.equivalent_pressures(x)
            return mech.solve_pressure(pE_m, pE_f)

        def jvp(u, v):
            if "u" not in cache or not np.array_equal(u, cache["u"]):
                G(u)
            x, cl = cache["x"], cache["cl"]
            vn = np.linalg.norm(v)
            if vn == 0:
                return np.zeros_like(v)
            if cache["lin"] is None:
                scale = flow.row_scale(cl, dt)
                R0, J, _ = flow.assemble(x, cl, dt, mass_prev)
                Js = J.multiply(scale[:, None]).tocsr()
                cache["lin"] = (scale, R0, sparse_lu(Js))
            scale, R0, lu = cache["lin"]
            eps = self.fp_cfg.jfnk_epsilon * (1.0 + np.linalg.norm(u)) / vn
            cl_eps = self.closures(u + eps * v)
            R1, _, _ = flow.assemble(x, cl_eps, dt, mass_prev, jacobian=False)
            rhs = -scale * (R1 - R0) / eps
            dx = lu.solve(rhs) if np.any(rhs) else np.zeros_like(rhs)
            s_m, s_f = flow.saturation_weights(x)
            d = flow.dofs
            dxp = dx.reshape(-1, 2)
            dpe_m = s_m * dxp[: d.n_cells, 0] + (1 - s_m) * dxp[: d.n_cells, 1]
            dpe_f = s_f * dxp[d.face0 : d.side0, 0] + (1 - s_f) * dxp[d.face0 : d.side0, 1]
            du = mech.solve(mech.pressure_load(dpe_m, dpe_f), homogeneous=True)
            return du - v

        fp = newton_krylov_fixed_point(G, state.u, self.fp_cfg, jvp=jvp)
        self.counters.n_nk += fp.evaluations
        self.counters.n_gmres_nk += fp.krylov_iterations
        u = fp.u
        if "u" not in cache or not np.array_equal(u, cache["u"]):
            G(u)
        x, cl = cache["x"], cache["cl"]
        R, _, info = flow.assemble(x, cl, dt, mass_prev, jacobian=False)
        pE_m, pE_f = flow.equivalent_pressures(x)
        phi = cl.phi_ref + (pE_m - self.pE0) / flow.M
        new = CoupledState(state.t + dt, x, u.copy(), phi, cl.d_f.copy(), pE_m, pE_f, cl.phi_ref.copy(), state.step + 1)
        self._assert_bounds(new)
        info.update(residual=R, mass_prev=mass_prev, closures=cl)
        step = StepInfo(
            dt,
            newton=self.counters.n_newton - before.n_newton,
            gmres=self.counters.n_gmres - before.n_gmres,
            gmres_nk=self.counters.n_gmres_nk - before.n_gmres_nk,
            nk=fp.evaluations,
            flow_info=info,
        )
        return new, step

    def _assert_bounds(self, state):
        if self.phi_min is not None and np.min(state.phi) < self.phi_min:
            raise BoundViolation(f"porosity {np.min(state.phi):.4g} below the bound {self.phi_min:.4g}")
        if self.d0 is not None and len(state.d_f) and np.min(state.d_f) < self.d0:
            raise BoundViolation(f"aperture {np.min(state.d_f):.4g} below the bound {self.d0:.4g}")

    # -- time loop ----------------------------------------------------

    def run(self, x0, controller: TimeController, max_steps=None, on_step=None, state=None):
        """Integrate until ``controller.t_final``.

        ``on_step(prev, new, info)`` is called after every accepted step.
        Returns the final state; counters are in ``self.counters``.
        """
        start = time.process_time()
        state = self.initial_state(x0) if state is None else state
        try:
            while not controller.done(state.t):
                if max_steps is not None and self.counters.n_steps >= max_steps:
                    break
                dt, last = controller.step(state.t)
                try:
                    new, info = self.advance_step(state, dt)
                except (NonConvergence, ClosureError, LinearSolveError) as exc:
                    if isinstance(exc, BoundViolation):
                        raise
                    self.counters.n_chops += 1
                    log.info("step %d chopped at dt=%.4g s: %s", state.step + 1, dt, exc)
                    controller.chop()
                    continue
                if last:
                    new.t = controller.t_final
                controller.accept()
                self.counters.n_steps += 1
                if on_step is not None:
                    on_step(state, new, info)
                state = new
        finally:
            self.counters.cpu += time.process_time() - start
        return state
