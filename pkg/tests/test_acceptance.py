"""Acceptance suite: one PASS/FAIL line per criterion.

The long scenario runs are module fixtures, so each is integrated once and
shared by the criteria that inspect it.
"""

import time

import numpy as np
import pytest

from fracporo.output import write_outputs
from fracporo.scenarios import builtin_scenario, build_problem, run_scenario
from fracporo.verify import (
    barrier_effect_demo,
    closed_run,
    constitutive_check,
    energy_bound_ratio,
    energy_check,
    jacobian_check,
    manufactured_convergence,
    mass_balance_check,
    quadratic_patch_test,
    tunnel_run,
)

pytestmark = pytest.mark.slow


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def gas_run():
    return timed(run_scenario, builtin_scenario("gas_injection_cross"))


@pytest.fixture(scope="module")
def tunnel_runs():
    return {model: timed(tunnel_run, model) for model in ("discontinuous", "continuous")}


@pytest.fixture(scope="module")
def conservation_run():
    return closed_run()


def test_constitutive_exactness(criterion):
    worst, seconds = timed(constitutive_check, 100)
    passed = max(worst.values()) <= 1e-10 and seconds < 1.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {seconds:.2f} s"
    assert criterion(1, "constitutive laws match oracles to 1e-10", passed, detail)


def test_jacobian_consistency(criterion):
    start = time.perf_counter()
    errors, cells = {}, {}
    for name, refine in (("gas_injection_cross", -1), ("tunnel_desaturation", 0)):
        problem = build_problem(builtin_scenario(name), refine=refine)
        cells[name] = problem.mesh.n_cells
        errors[name] = jacobian_check(problem)
    seconds = time.perf_counter() - start
    passed = max(errors.values()) <= 1e-6 and max(cells.values()) <= 2000 and seconds < 30
    detail = ", ".join(f"{k} {errors[k]:.1e} on {cells[k]} cells" for k in errors) + f"; {seconds:.1f} s"
    assert criterion(2, "flow Jacobian matches finite differences to 1e-6", passed, detail)


def test_conservation(criterion, conservation_run):
    res = mass_balance_check(conservation_run)
    worst = max(res["nw"], res["w"])
    passed = res["status"] == "checked" and res["steps"] >= 50 and worst <= 1e-10
    detail = f"{res['steps']} steps, defect nw {res['nw']:.1e}, w {res['w']:.1e}"
    assert criterion(3, "closed variant conserves each phase to 1e-10 per step", passed, detail)


def test_energy_properties(criterion, gas_run, tunnel_runs, conservation_run):
    logs = {"gas": gas_run[0].log, "closed": conservation_run.log}
    logs.update({f"tunnel_{m}": r[0][0].log for m, r in tunnel_runs.items()})
    checks = {name: energy_check(log, chord_slack=1e-12) for name, log in logs.items()}
    passed = all(c["passed"] for c in checks.values())
    detail = "; ".join(
        f"{k}: min interface {c['min_interface_dissipation']:.1e}, min chord {c['min_chord']:.1e}"
        for k, c in checks.items()
    )
    assert criterion(4, "interface dissipation >= 0, chord inequality, finite norms", passed, detail)


def test_kernel_convergence(criterion):
    start = time.perf_counter()
    darcy = manufactured_convergence("darcy_single_phase")["order"]
    elastic = manufactured_convergence("elasticity_plane")["order"]
    patch = quadratic_patch_test()
    seconds = time.perf_counter() - start
    passed = darcy >= 1.8 and elastic >= 2.7 and patch <= 1e-10 and seconds < 120
    detail = f"Darcy order {darcy:.3f}, elasticity order {elastic:.3f}, patch {patch:.1e}; {seconds:.1f} s"
    assert criterion(5, "manufactured orders and quadratic patch test", passed, detail)


def test_gas_injection(criterion, gas_run):
    run, seconds = gas_run
    series = np.array(run.series)
    injected = run.log.last["injected_nw"]
    # injection starts with the first step, so the whole record is checked
    ds = np.diff(series[:, 2]).min()
    dd = np.diff(series[:, 3]).min()
    checks = {
        "a": run.completed and run.counters["N_Chops"] == 0,
        "b": abs(injected - 400.0) <= 1e-6 * 400.0,
        "c_saturation": ds >= 0,
        "c_aperture": dd >= 0,
        "d": run.counters["N_dt"] == run.scenario.step_schedule(),
    }
    detail = (
        f"{run.problem.mesh.n_cells} cells, chops {run.counters['N_Chops']}, injected {injected:.9g} m3, "
        f"min step change s_nw {ds:.1e} aperture {dd:.1e}, steps {run.counters['N_dt']} "
        f"vs schedule {run.scenario.step_schedule()}; failing parts {[k for k, v in checks.items() if not v]}; "
        f"{seconds:.0f} s"
    )
    assert criterion(6, "gas injection run", all(checks.values()) and seconds < 600, detail)


def test_barrier_effect(criterion):
    report, seconds = timed(barrier_effect_demo)
    detail = (
        f"jump {report.jump_discontinuous:.3g} Pa, flux ratio {report.flux_ratio:.3f}, "
        f"liquid-filled control ratio {report.flux_liquid_filled / report.flux_continuous:.3f}; {seconds:.1f} s"
    )
    assert criterion(7, "gas-filled fracture is a barrier to the liquid", report.passed and seconds < 60, detail)


def _aperture_history(run):
    s = np.array(run.series)
    return s[:, 0], s[:, 3]


def test_tunnel_desaturation(criterion, tunnel_runs):
    (disc, hist_d), _ = tunnel_runs["discontinuous"]
    (cont, hist_c), _ = tunnel_runs["continuous"]
    td, ad = _aperture_history(disc)
    tc, ac = _aperture_history(cont)
    grid = np.geomspace(max(td[1], tc[1]), min(td[-1], tc[-1]), 200)
    diff = np.max(np.abs(np.interp(grid, td, ad) - np.interp(grid, tc, ac)) / np.interp(grid, tc, ac))
    mono = min(np.diff(hist_d).min(), np.diff(hist_c).min())
    passed = disc.completed and cont.completed and mono >= 0 and hist_d[-1] > hist_d[0] and diff >= 1e-2
    detail = (
        f"annulus s_nw {hist_d[0]:.3f} -> {hist_d[-1]:.3f} (discontinuous), {hist_c[-1]:.3f} (continuous), "
        f"min change {mono:.1e}; aperture differs by up to {100 * diff:.1f} %"
    )
    assert criterion(8, "tunnel desaturation in both modes", passed, detail)


def test_determinism(criterion, tmp_path):
    identical = {}
    for name, refine, steps in (("gas_injection_cross", -1, 15), ("tunnel_desaturation", 0, 15)):
        texts = []
        for k in range(2):
            out = tmp_path / f"{name}_{k}"
            write_outputs(run_scenario(builtin_scenario(name), refine=refine, max_steps=steps), out)
            texts.append([(out / f).read_bytes() for f in ("series.csv", "diagnostics.csv")])
        identical[name] = texts[0] == texts[1]
    detail = ", ".join(f"{k} {'identical' if v else 'different'}" for k, v in identical.items())
    assert criterion(9, "repeated runs give bitwise identical CSV", all(identical.values()), detail)


def test_regression_constants(regression, gas_run, tunnel_runs):
    tol = regression["rel_tol"]
    gas = regression["gas_injection_cross"]
    assert energy_bound_ratio(gas_run[0]) == pytest.approx(gas["energy_bound_ratio"], rel=tol)
    for model, ref in regression["tunnel_desaturation"].items():
        assert energy_bound_ratio(tunnel_runs[model][0][0]) == pytest.approx(ref["energy_bound_ratio"], rel=tol)
    assert barrier_effect_demo().flux_ratio == pytest.approx(regression["barrier"]["flux_ratio"], rel=tol)

