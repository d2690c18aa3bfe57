from dataclasses import replace

import numpy as np
import pytest

from fracporo.errors import UnknownScenario, ValidationError
from fracporo.scenarios import (
    BUILTINS,
    SERIES_COLUMNS,
    builtin_scenario,
    closed_variant,
    make_mesh,
    run_scenario,
    validate,
)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_validate_and_mesh(name):
    sc = builtin_scenario(name)
    assert validate(sc) is sc
    mesh = make_mesh(sc, refine=0)
    assert mesh.n_faces > 0
    assert mesh.total_area() == pytest.approx((sc.domain[1] - sc.domain[0]) * (sc.domain[3] - sc.domain[2]))


def test_unknown_builtin():
    with pytest.raises(UnknownScenario):
        builtin_scenario("nope")


def test_closed_variant_has_no_flow_boundaries():
    sc = closed_variant(builtin_scenario("tunnel_desaturation"))
    assert sc.flow_bc == {} and sc.name.endswith("_closed")


def test_refinement_halves_spacing():
    sc = builtin_scenario("gas_injection_cross")
    # the graded outer zone keeps its growth factor, so less than 4x
    assert make_mesh(sc, 1).n_cells > 2 * make_mesh(sc, 0).n_cells


@pytest.mark.parametrize(
    "changes,key",
    [
        (dict(mode="3d"), "mode"),
        (dict(model="mixed"), "model"),
        (dict(porosity=1.2), "porosity"),
        (dict(biot=0.0), "biot"),
        (dict(normal_transmissivity=None), "normal_transmissivity"),
        (dict(permeability=-1.0), "permeability"),
        (dict(t_final=-1.0), "t_final"),
        (dict(growth=0.5), "growth"),
        (dict(domain=(0.0, -1.0, 0.0, 1.0)), "domain"),
    ],
)
def test_validation_errors(changes, key):
    sc = replace(builtin_scenario("gas_injection_cross"), **changes)
    with pytest.raises(ValidationError) as err:
        validate(sc)
    assert err.value.key == key


def test_axisymmetric_domain_must_be_nonnegative():
    sc = replace(builtin_scenario("tunnel_desaturation"), domain=(0.0, 10.0, -1.0, 35.0))
    with pytest.raises(ValidationError):
        validate(sc)


def test_run_records(small_run):
    assert len(small_run.series) == 6
    assert all(len(row) == len(SERIES_COLUMNS) for row in small_run.series)
    t = np.array(small_run.series)[:, 0]
    assert t[0] == 0.0 and np.all(np.diff(t) > 0)
    # initial snapshot only: five small steps reach no snapshot time
    assert [s.index for s in small_run.snapshots] == [0]
    assert small_run.error is None


def test_snapshots_follow_schedule(small_gas):
    # the injected volume is tied to t_final, so switch the source off
    source = replace(small_gas.source, kind="none")
    sc = replace(small_gas, t_final=small_gas.dt_init * 4, dt_max=small_gas.dt_init, snapshots=2, source=source)
    run = run_scenario(sc)
    assert run.completed
    assert [s.t for s in run.snapshots] == pytest.approx([0.0, 2 * sc.dt_init, 4 * sc.dt_init])


def test_on_step_hook_sees_every_state(small_gas):
    seen = []
    run = run_scenario(small_gas, max_steps=3, on_step=lambda pb, st: seen.append(st.t))
    assert seen == [row[0] for row in run.series[1:]]


def test_bound_violation_is_reported(small_gas):
    sc = replace(small_gas, d0=1.0)
    run = run_scenario(sc, max_steps=3, raise_on_abort=False)
    assert not run.completed
    assert "aperture" in run.error
