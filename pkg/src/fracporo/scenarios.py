"""Scenario data model, builtin data sets and problem assembly.

A :class:`Scenario` is a plain, immutable description of a run. It is turned
into discrete operators by :func:`build_problem` and integrated by
:func:`run_scenario`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .coupling import DAY, CoupledProblem, CoupledState, TimeController, schedule_step_count
from .diagnostics import ENERGY_COLUMNS, DiagnosticLog, initial_record, step_record
from .errors import Abort, BoundViolation, UnknownScenario, ValidationError
from .flow import FlowModel
from .mech import Elasticity, MechBC
from .mesh import BOUNDARY_SIDES, Mesh, build_mesh, graded_breaks, uniform_breaks
from .rockphys import MobilityLaw, RockType, SaturationLaw, capillary_pressure
from .solvers import FixedPointConfig, GmresConfig, NewtonConfig

__all__ = [
    "LawSpec",
    "FlowBoundary",
    "SourceSpec",
    "MeshSpec",
    "Scenario",
    "BUILTINS",
    "builtin_scenario",
    "closed_variant",
    "Problem",
    "build_problem",
    "validate",
    "YEAR",
    "Snapshot",
    "RunResult",
    "SERIES_COLUMNS",
    "run_scenario",
    "measure_means",
]

log = logging.getLogger(__name__)

YEAR = 365.0 * DAY
ROCK_KEYS = ("m", "f", "plus", "minus")
_ROCK_TAGS = {"m": "m", "f": "f", "plus": "+", "minus": "-"}


@dataclass(frozen=True)
class LawSpec:
    """Saturation and mobility laws of one rock type."""

    R: float = 1.0e4
    saturation: str = "corey"
    mobility: str = "quadratic_over_mu"
    vg_q: float = 0.5
    s_lr: float = 0.0
    s_gr: float = 0.0


@dataclass(frozen=True)
class FlowBoundary:
    """Flow condition on one boundary side.

    ``matrix``/``fracture`` switch Dirichlet data on for matrix cells and for
    fracture ends on that side; otherwise the side is impervious. The
    Dirichlet state is the pressure of ``phase`` plus the non-wetting
    saturations, converted to ``(p_nw, p_w)`` with each rock's law.
    """

    matrix: bool = False
    fracture: bool = False
    phase: str = "w"
    pressure: float = 0.0
    s_nw_matrix: float = 0.0
    s_nw_fracture: float = 0.0


@dataclass(frozen=True)
class SourceSpec:
    """Fracture source ``h_f = g / int g * fraction * V_por / T`` with
    ``g = exp(-beta (|x - center| / length)^2)``; ``kind="none"`` disables it.
    """

    kind: str = "none"
    phase: str = "nw"
    center: tuple = (0.0, 0.0)
    beta: float = 1000.0
    length: float = 1.0
    pore_volume_fraction: float = 0.2


@dataclass(frozen=True)
class MeshSpec:
    """Criss-cross rectangle mesh: spacing ``h`` on the fine zones and
    geometric coarsening by ``growth`` (capped at ``h_max``) outside.
    A fine zone of None means uniform spacing ``h`` along that axis.
    """

    h: float = 1.0
    fine_x: tuple | None = None
    fine_y: tuple | None = None
    growth: float = 1.3
    h_max: float | None = None


@dataclass(frozen=True)
class Scenario:
    """Complete description of a run, in SI units."""

    name: str
    domain: tuple
    fractures: tuple = ()
    mesh: MeshSpec = MeshSpec()
    mode: str = "plane"
    model: str = "discontinuous"
    permeability: float = 1e-15
    porosity: float = 0.2
    lame_lambda: float = 1e9
    lame_mu: float = 1e9
    biot: float = 1.0
    biot_modulus: float = 1e10
    normal_transmissivity: float | None = None
    damaged_width: float = 1e-3
    damaged_porosity: float | None = None
    aperture_offset: float | None = None
    prestress: tuple = (0.0, 0.0, 0.0, 0.0)
    mu_w: float = 1e-3
    mu_nw: float = 1.851e-5
    laws: dict = field(default_factory=lambda: {k: LawSpec() for k in ROCK_KEYS})
    flow_bc: dict = field(default_factory=dict)
    mech_bc: dict = field(default_factory=dict)
    initial_p_nw: float = 1e5
    initial_p_w: float = 1e5
    initial_fracture_p_nw: float | None = None
    initial_fracture_p_w: float | None = None
    source: SourceSpec = SourceSpec()
    t_final: float = 1.0
    dt_init: float = 1.0
    dt_max: float = 1.0
    growth: float = 1.1
    chop_factor: float = 2.0
    dt_min: float = 1e-9 * DAY
    newton: NewtonConfig = NewtonConfig()
    gmres: GmresConfig = GmresConfig()
    fixed_point: FixedPointConfig = FixedPointConfig()
    snapshots: int = 10
    phi_min: float | None = None
    d0: float | None = None

    @property
    def axisymmetric(self) -> bool:
        return self.mode == "axisymmetric"

    def step_schedule(self) -> int:
        """Step count of the time controller when no step is chopped."""
        if self.t_final <= 0:
            return 0
        return schedule_step_count(self.t_final, self.dt_init, self.dt_max, self.growth)


# -- validation ---------------------------------------------------------


def _positive(sc, names):
    for name in names:
        value = getattr(sc, name)
        if not (value is not None and np.isfinite(value) and value > 0):
            raise ValidationError(f"{name} must be a positive number, got {value!r}", key=name)


def validate(sc: Scenario) -> Scenario:
    """Check parameter admissibility; returns ``sc`` unchanged."""
    if sc.mode not in ("plane", "axisymmetric"):
        raise ValidationError(f"mode must be 'plane' or 'axisymmetric', got {sc.mode!r}", key="mode")
    if sc.model not in ("discontinuous", "continuous"):
        raise ValidationError(f"model must be 'discontinuous' or 'continuous', got {sc.model!r}", key="model")
    x0, x1, y0, y1 = sc.domain
    if not (x1 > x0 and y1 > y0):
        raise ValidationError("domain must have positive extent", key="domain")
    if sc.axisymmetric and y0 < 0:
        raise ValidationError("axisymmetric domains must lie in r >= 0", key="domain")
    _positive(sc, ("permeability", "lame_lambda", "lame_mu", "biot_modulus", "mu_w", "mu_nw"))
    if not 0 < sc.porosity < 1:
        raise ValidationError(f"porosity must lie in (0, 1), got {sc.porosity!r}", key="porosity")
    if not 0 < sc.biot <= 1:
        raise ValidationError(f"biot must lie in (0, 1], got {sc.biot!r}", key="biot")
    if sc.model == "discontinuous" and sc.fractures:
        if sc.normal_transmissivity is None:
            raise ValidationError(
                "normal_transmissivity is required by the discontinuous model", key="normal_transmissivity"
            )
        _positive(sc, ("normal_transmissivity", "damaged_width"))
        if sc.damaged_porosity is not None and not 0 < sc.damaged_porosity < 1:
            raise ValidationError("damaged_porosity must lie in (0, 1)", key="damaged_porosity")
    if sc.aperture_offset is not None:
        _positive(sc, ("aperture_offset",))
    if set(sc.laws) != set(ROCK_KEYS):
        raise ValidationError(f"laws must be given for rock types {ROCK_KEYS}", key="laws")
    for key, law in sc.laws.items():
        if not law.R > 0:
            raise ValidationError(f"law.{key}: R must be positive", key="R")
        if not (0 <= law.s_lr < 1 and 0 <= law.s_gr < 1 and law.s_lr + law.s_gr < 1):
            raise ValidationError(f"law.{key}: residual saturations must satisfy 0 <= s_lr + s_gr < 1", key="s_lr")
        if not 0 < law.vg_q < 1:
            raise ValidationError(f"law.{key}: vg_q must lie in (0, 1)", key="vg_q")
    for side, bc in list(sc.flow_bc.items()) + list(sc.mech_bc.items()):
        if side not in BOUNDARY_SIDES:
            raise ValidationError(f"unknown boundary side {side!r}", key=side)
    for side, bc in sc.flow_bc.items():
        if bc.phase not in ("w", "nw"):
            raise ValidationError(f"flow_bc.{side}: phase must be 'w' or 'nw'", key="phase")
        for name in ("s_nw_matrix", "s_nw_fracture"):
            if not 0 <= getattr(bc, name) < 1:
                raise ValidationError(f"flow_bc.{side}: {name} must lie in [0, 1)", key=name)
    if sc.source.kind not in ("none", "gaussian"):
        raise ValidationError(f"unknown source kind {sc.source.kind!r}", key="kind")
    if sc.source.kind != "none":
        if sc.source.phase not in ("w", "nw"):
            raise ValidationError("source phase must be 'w' or 'nw'", key="phase")
        if not (sc.source.length > 0 and sc.source.beta >= 0 and sc.source.pore_volume_fraction >= 0):
            raise ValidationError("source length must be positive, beta and fraction non-negative", key="source")
        if not sc.fractures:
            raise ValidationError("a fracture source needs fractures", key="source")
    if sc.t_final < 0:
        raise ValidationError("t_final must be non-negative", key="t_final")
    _positive(sc, ("dt_init", "dt_max", "dt_min"))
    if sc.growth < 1 or sc.chop_factor <= 1:
        raise ValidationError("growth must be >= 1 and chop_factor > 1", key="growth")
    if sc.snapshots < 0:
        raise ValidationError("snapshots must be non-negative", key="snapshots")
    m = sc.mesh
    if not (m.h > 0 and m.growth >= 1 and (m.h_max is None or m.h_max >= m.h)):
        raise ValidationError("mesh: h must be positive, growth >= 1, h_max >= h", key="h")
    return sc


# -- builtins -----------------------------------------------------------


def gas_injection_cross() -> Scenario:
    """Gas injection at the centre of a cross-shaped network (plane strain)."""
    L = 100.0
    c = L / 2
    arm = L / 8
    fractures = (
        ((c, c), (c, c + arm)),
        ((c, c), (c, c - arm)),
        ((c, c), (c + arm, c)),
        ((c, c), (c - arm, c)),
    )
    matrix = LawSpec(R=1e4, mobility="quadratic_over_mu")
    clamped = MechBC(0.0, 0.0)
    return Scenario(
        name="gas_injection_cross",
        domain=(0.0, L, 0.0, L),
        fractures=fractures,
        mesh=MeshSpec(h=12.5 / 6, fine_x=(37.5, 62.5), fine_y=(37.5, 62.5), growth=1.3),
        permeability=3e-15,
        porosity=0.2,
        lame_lambda=833e6,
        lame_mu=1250e6,
        biot=0.81,
        biot_modulus=18.4e9,
        normal_transmissivity=1e-8,
        damaged_width=1e-3,
        mu_w=1e-3,
        mu_nw=1.851e-5,
        laws={"m": matrix, "f": LawSpec(R=10.0, mobility="linear_over_mu"), "plus": matrix, "minus": matrix},
        flow_bc={"top": FlowBoundary(matrix=True, phase="w", pressure=1e5, s_nw_matrix=0.0)},
        mech_bc={side: clamped for side in BOUNDARY_SIDES},
        initial_p_nw=1e5,
        initial_p_w=1e5,
        source=SourceSpec(kind="gaussian", phase="nw", center=(c, c), beta=1000.0, length=L, pore_volume_fraction=0.2),
        t_final=1000 * DAY,
        dt_init=1e-3 * DAY,
        dt_max=10 * DAY,
    )


def tunnel_fractures():
    """Reconstructed fracture network around the gallery wall ``r = 5``.

    Eight fractures start on the wall at ``x_k = 0.625 + 1.25 k``. Even ones
    run at 45 degrees to ``(x_k + 0.625, 5.625)``; odd ones run radially to
    ``(x_k, 6.25)``, and the first three carry a branch parallel to the axis
    from ``(x_k, 5.625)`` to ``(x_k + 0.625, 5.625)``. No chain of fractures
    closes a loop with the wall, so no rock block is cut loose.
    """
    segs = []
    r0, rm, r1 = 5.0, 5.625, 6.25
    for k in range(8):
        xk = 0.625 + 1.25 * k
        if k % 2 == 0:
            segs.append(((xk, r0), (xk + 0.625, rm)))
        elif k < 7:
            segs.append(((xk, r0), (xk, rm)))
            segs.append(((xk, rm), (xk, r1)))
            segs.append(((xk, rm), (xk + 0.625, rm)))
        else:
            segs.append(((xk, r0), (xk, r1)))
    return tuple(segs)


def tunnel_desaturation() -> Scenario:
    """Desaturation of the rock around a ventilated gallery (axisymmetric)."""
    vg = dict(mobility="van_genuchten_over_mu", vg_q=0.328, s_lr=0.4, s_gr=0.0)
    matrix = LawSpec(R=2e8, **vg)
    fracture = LawSpec(R=1e2, **vg)
    p_atm = 1e5
    return Scenario(
        name="tunnel_desaturation",
        domain=(0.0, 10.0, 5.0, 35.0),
        fractures=tunnel_fractures(),
        mesh=MeshSpec(h=0.625, fine_x=None, fine_y=(5.0, 7.5), growth=1.3, h_max=2.5),
        mode="axisymmetric",
        permeability=5e-20,
        porosity=0.15,
        lame_lambda=1.5e9,
        lame_mu=2e9,
        biot=1.0,
        biot_modulus=1e9,
        normal_transmissivity=1e-9,
        damaged_width=1e-3,
        aperture_offset=1e-2,
        prestress=(16e6, 12e6, 12e6, 0.0),
        mu_w=1e-3,
        mu_nw=1.851e-5,
        laws={"m": matrix, "f": fracture, "plus": matrix, "minus": matrix},
        flow_bc={
            "bottom": FlowBoundary(
                matrix=True, fracture=True, phase="nw", pressure=p_atm, s_nw_matrix=0.35, s_nw_fracture=1 - 1e-8
            ),
            "top": FlowBoundary(matrix=True, phase="w", pressure=4e6, s_nw_matrix=0.0),
        },
        mech_bc={
            "left": MechBC(ux=0.0),
            "right": MechBC(ux=0.0),
            "bottom": MechBC(normal_pressure=p_atm),
            "top": MechBC(normal_pressure=10.95e6),
        },
        initial_p_nw=4e6,
        initial_p_w=4e6,
        t_final=200 * YEAR,
        dt_init=1e-3 * DAY,
        dt_max=10 * YEAR,
    )


BUILTINS = {"gas_injection_cross": gas_injection_cross, "tunnel_desaturation": tunnel_desaturation}


def builtin_scenario(name: str) -> Scenario:
    """Builtin data set by name."""
    try:
        return validate(BUILTINS[name]())
    except KeyError:
        raise UnknownScenario(f"unknown builtin scenario {name!r}; choose from {sorted(BUILTINS)}") from None


def closed_variant(sc: Scenario) -> Scenario:
    """Same scenario with every flow boundary impervious."""
    return replace(sc, name=sc.name + "_closed", flow_bc={})


# -- assembly -----------------------------------------------------------


def _breaks(lo, hi, fine, spec: MeshSpec, scale):
    h = spec.h * scale
    h_max = None if spec.h_max is None else spec.h_max * scale
    if fine is None:
        return uniform_breaks(lo, hi, h)
    return graded_breaks(lo, hi, fine[0], fine[1], h, spec.growth, h_max)


def make_mesh(sc: Scenario, refine: int = 0) -> Mesh:
    """Mesh of the scenario; each unit of ``refine`` halves the spacing."""
    scale = 2.0 ** (-refine)
    x0, x1, y0, y1 = sc.domain
    xb = _breaks(x0, x1, sc.mesh.fine_x, sc.mesh, scale)
    yb = _breaks(y0, y1, sc.mesh.fine_y, sc.mesh, scale)
    return build_mesh(sc.domain, sc.fractures, x_breaks=xb, y_breaks=yb)


def make_rocks(sc: Scenario):
    rocks = []
    for key in ROCK_KEYS:
        law = sc.laws[key]
        sat = SaturationLaw(law.saturation, law.R)
        kw = dict(q=law.vg_q, s_lr=law.s_lr, s_gr=law.s_gr)
        mob_nw = MobilityLaw(law.mobility, "nw", sc.mu_nw, **kw)
        mob_w = MobilityLaw(law.mobility, "w", sc.mu_w, **kw)
        extra = {}
        if key in ("plus", "minus"):
            extra = dict(width=sc.damaged_width, porosity=sc.porosity if sc.damaged_porosity is None else sc.damaged_porosity)
        rocks.append(RockType(sat, mob_nw, mob_w, _ROCK_TAGS[key], **extra))
    return rocks


def _dirichlet_state(bc: FlowBoundary, law: SaturationLaw, s_nw):
    pc = float(capillary_pressure(law, s_nw))
    if bc.phase == "w":
        return (bc.pressure + pc, bc.pressure)
    return (bc.pressure, bc.pressure - pc)


def fracture_source_rate(sc: Scenario, flow: FlowModel) -> np.ndarray:
    """Per-face source density (m/s) of the scenario's fracture source."""
    mesh = flow.mesh
    if sc.source.kind == "none" or not mesh.n_faces:
        return np.zeros(mesh.n_faces)
    mid = mesh.edge_midpoint[mesh.fracture_edges]
    dist = np.linalg.norm(mid - np.asarray(sc.source.center, dtype=float), axis=1) / sc.source.length
    g = np.exp(-sc.source.beta * dist**2)
    v_por = sc.porosity * flow.cell_volume.sum()
    return g / np.sum(g * flow.face_measure) * sc.source.pore_volume_fraction * v_por / sc.t_final


@dataclass
class Problem:
    """Discrete operators and initial flow state of a scenario."""

    scenario: Scenario
    mesh: Mesh
    flow: FlowModel
    mech: Elasticity
    coupled: CoupledProblem
    x0: np.ndarray

    def controller(self) -> TimeController:
        sc = self.scenario
        return TimeController(sc.t_final, sc.dt_init, sc.dt_max, sc.growth, sc.chop_factor, sc.dt_min)

    def initial_state(self) -> CoupledState:
        return self.coupled.initial_state(self.x0)


def build_problem(sc: Scenario, refine: int = 0, mesh: Mesh | None = None) -> Problem:
    """Assemble flow, mechanics and the coupled problem for ``sc``."""
    validate(sc)
    mesh = make_mesh(sc, refine) if mesh is None else mesh
    rocks = make_rocks(sc)
    m_dir, f_dir = {}, {}
    for side, bc in sc.flow_bc.items():
        if bc.matrix:
            m_dir[side] = _dirichlet_state(bc, rocks[0].saturation, bc.s_nw_matrix)
        if bc.fracture:
            f_dir[side] = _dirichlet_state(bc, rocks[1].saturation, bc.s_nw_fracture)
    t_f = sc.normal_transmissivity if sc.normal_transmissivity is not None else 1.0
    flow = FlowModel(
        mesh,
        rocks,
        sc.permeability,
        t_f,
        sc.biot_modulus,
        mode=sc.model,
        axisymmetric=sc.axisymmetric,
        matrix_dirichlet=m_dir,
        fracture_dirichlet=f_dir,
    )
    rate = fracture_source_rate(sc, flow)
    if np.any(rate):
        face_rate = np.zeros((mesh.n_faces, 2))
        face_rate[:, 0 if sc.source.phase == "nw" else 1] = rate
        flow.set_sources(face_rate=face_rate)
    mech = Elasticity(
        mesh,
        sc.lame_lambda,
        sc.lame_mu,
        sc.biot,
        axisymmetric=sc.axisymmetric,
        bcs=sc.mech_bc,
        prestress=sc.prestress,
    )
    coupled = CoupledProblem(
        flow,
        mech,
        sc.porosity,
        aperture_offset=sc.aperture_offset,
        newton=sc.newton,
        gmres_cfg=sc.gmres,
        fixed_point=sc.fixed_point,
        phi_min=sc.phi_min,
        d0=sc.d0,
    )
    face_p = None
    if sc.initial_fracture_p_nw is not None or sc.initial_fracture_p_w is not None:
        face_p = (
            sc.initial_p_nw if sc.initial_fracture_p_nw is None else sc.initial_fracture_p_nw,
            sc.initial_p_w if sc.initial_fracture_p_w is None else sc.initial_fracture_p_w,
        )
    x0 = flow.initial_state((sc.initial_p_nw, sc.initial_p_w), face_p)
    return Problem(sc, mesh, flow, mech, coupled, x0)


# -- running ------------------------------------------------------------

SERIES_COLUMNS = (
    ("t", "mean_s_nw_matrix", "mean_s_nw_fracture", "mean_aperture")
    + ENERGY_COLUMNS
    + ("dissipation_cum", "mass_nw", "mass_w", "injected_nw")
)


@dataclass
class Snapshot:
    """Field values at one time.

    ``cell`` holds per-cell arrays (``s_nw``, ``p_nw``, ``p_w``, ``p_E``,
    ``phi``, ``sigma_xx``, ``sigma_yy``, ``sigma_zz``, ``sigma_xy``);
    ``face`` holds per-fracture-face arrays (``s_nw``, ``p_nw``, ``p_w``,
    ``d_f``).
    """

    index: int
    t: float
    cell: dict
    face: dict


@dataclass
class RunResult:
    """Everything produced by :func:`run_scenario`."""

    scenario: Scenario
    problem: Problem
    state: CoupledState
    log: DiagnosticLog
    series: list
    snapshots: list
    counters: dict
    completed: bool
    refine: int = 0
    error: str | None = None


def measure_means(problem: Problem, state: CoupledState):
    """Measure-weighted means ``(s_nw matrix, s_nw fracture, aperture)``.

    Cells are weighted by their volume and faces by their measure, both
    including the ``2 pi r`` factor in axisymmetric mode. Without fractures
    the fracture means are 0.
    """
    flow = problem.flow
    d = flow.dofs
    _, _, _, s, _, _ = flow.entity_state(state.x)
    vol = flow.cell_volume
    sm = float(np.sum(vol * s[: d.n_cells]) / np.sum(vol))
    if not d.n_faces:
        return sm, 0.0, 0.0
    w = flow.face_measure
    sf = float(np.sum(w * s[d.face0 : d.side0]) / np.sum(w))
    da = float(np.sum(w * state.d_f) / np.sum(w))
    return sm, sf, da


def _series_row(problem, state, record):
    return (state.t, *measure_means(problem, state)) + tuple(float(record[c]) for c in SERIES_COLUMNS[4:])


def _snapshot(problem: Problem, state: CoupledState, index: int) -> Snapshot:
    flow, mech = problem.flow, problem.mech
    d = flow.dofs
    pn, pw, _, s, _, _ = flow.entity_state(state.x)
    sig = mech.total_stress(state.u, state.pE_m)
    cell = {
        "s_nw": s[: d.n_cells].copy(),
        "p_nw": pn[: d.n_cells].copy(),
        "p_w": pw[: d.n_cells].copy(),
        "p_E": state.pE_m.copy(),
        "phi": state.phi.copy(),
        "sigma_xx": sig[:, 0].copy(),
        "sigma_yy": sig[:, 1].copy(),
        "sigma_zz": sig[:, 2].copy(),
        "sigma_xy": sig[:, 3].copy(),
    }
    fs = slice(d.face0, d.side0)
    face = {"s_nw": s[fs].copy(), "p_nw": pn[fs].copy(), "p_w": pw[fs].copy(), "d_f": state.d_f.copy()}
    return Snapshot(index, state.t, cell, face)


def run_scenario(
    sc: Scenario,
    refine: int = 0,
    max_steps: int | None = None,
    mesh: Mesh | None = None,
    raise_on_abort: bool = True,
    on_step=None,
) -> RunResult:
    """Build and integrate ``sc``.

    Snapshots are taken at the initial state and at the first accepted
    step reaching each of ``sc.snapshots`` equally spaced times.

    Raises
    ------
    Abort
        If the step size falls below ``sc.dt_min``.
    BoundViolation
        If ``sc.phi_min`` or ``sc.d0`` is violated by an accepted state.

    With ``raise_on_abort=False`` these are caught instead and the result
    holds the last accepted state, ``completed=False`` and the message in
    ``error``. ``on_step(problem, state)`` is called after every accepted
    step, after the diagnostics are recorded.
    """
    problem = build_problem(sc, refine, mesh)
    state = problem.initial_state()
    log_ = DiagnosticLog()
    log_.append(initial_record(problem.coupled, state))
    series = [_series_row(problem, state, log_.last)]
    snapshots = [_snapshot(problem, state, 0)]
    targets = [sc.t_final * k / sc.snapshots for k in range(1, sc.snapshots + 1)] if sc.t_final > 0 else []

    accepted = [state]

    def record(prev, new, info):
        accepted[0] = new
        log_.append(step_record(problem.coupled, prev, new, info, log_.last))
        series.append(_series_row(problem, new, log_.last))
        if targets and new.t >= targets[0] * (1 - 1e-12):
            while targets and new.t >= targets[0] * (1 - 1e-12):
                targets.pop(0)
            snapshots.append(_snapshot(problem, new, len(snapshots)))
        if on_step is not None:
            on_step(problem, new)

    controller = problem.controller()
    error = None
    try:
        final = problem.coupled.run(problem.x0, controller, max_steps=max_steps, on_step=record, state=state)
    except (Abort, BoundViolation) as exc:
        if raise_on_abort:
            raise
        final, error = accepted[0], str(exc)
    completed = error is None and controller.done(final.t)
    counters = problem.coupled.counters
    log.info("%s: %d steps, %d chops, completed=%s", sc.name, counters.n_steps, counters.n_chops, completed)
    return RunResult(sc, problem, final, log_, series, snapshots, counters.as_dict(), completed, refine, error)
