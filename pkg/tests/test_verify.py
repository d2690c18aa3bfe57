import json
import math

import numpy as np
import pytest

from fracporo.diagnostics import COLUMNS, DiagnosticLog
from fracporo.scenarios import build_problem
from fracporo.verify import (
    constitutive_check,
    energy_bound_ratio,
    energy_check,
    jacobian_check,
    manufactured_convergence,
    mass_balance_check,
    quadratic_patch_test,
    reference_capillary_energy,
    reference_equivalent_pressure,
    reference_saturation,
    verification_report,
)


def test_oracles_closed_forms():
    assert reference_saturation(0.0, 5.0) == 0.0
    assert reference_saturation(5.0 * math.log(2), 5.0) == pytest.approx(0.5, rel=1e-15)
    # U(pc) = R (1 - (1 + x) e^-x), x = pc / R
    x = 3.0
    assert reference_capillary_energy(x * 7.0, 7.0) == pytest.approx(7.0 * (1 - (1 + x) * math.exp(-x)), rel=1e-13)
    assert reference_equivalent_pressure(2e5, 2e5, 10.0) == pytest.approx(2e5)


def test_constitutive_check_is_tight():
    worst = constitutive_check(n=20)
    assert all(isinstance(v, float) for v in worst.values())
    assert max(worst.values()) <= 1e-10


def test_jacobian_check_small(small_gas):
    assert jacobian_check(build_problem(small_gas), n_directions=2) <= 1e-6


@pytest.mark.parametrize("problem,order", [("darcy_single_phase", 1.8), ("elasticity_plane", 2.7)])
def test_manufactured_orders(problem, order):
    res = manufactured_convergence(problem, levels=(4, 8, 16))
    assert res["order"] >= order
    assert np.all(np.diff(res["errors"]) < 0)


def test_unknown_manufactured_problem():
    with pytest.raises(ValueError):
        manufactured_convergence("heat")


def test_patch_test_default():
    assert quadratic_patch_test() <= 1e-10


def test_mass_balance_skips_open_runs(small_run):
    assert mass_balance_check(small_run)["status"] == "skipped"


def test_energy_check_and_bound(small_run):
    res = energy_check(small_run.log)
    assert res["passed"]
    assert 0 < energy_bound_ratio(small_run) < 1


def test_energy_check_flags_negative_dissipation():
    log = DiagnosticLog()
    base = {c: 0.0 for c in COLUMNS}
    log.append(base)
    log.append(dict(base, step=1.0, dissipation=-1.0))
    assert not energy_check(log)["passed"]
    log.append(dict(base, step=2.0, grad_p_sq=np.inf))
    res = energy_check(log)
    assert not res["norms_finite"] and not res["passed"]


def test_report_is_json(tmp_path):
    path = tmp_path / "r.json"
    text = verification_report([{"name": "x", "passed": True, "value": np.float64(1.5), "limit": 2}], path)
    assert json.loads(path.read_text()) == json.loads(text)
    assert json.loads(text)[0]["value"] == 1.5
