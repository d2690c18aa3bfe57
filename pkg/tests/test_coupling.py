import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracporo.coupling import DAY, TimeController, schedule_step_count
from fracporo.errors import Abort
from fracporo.scenarios import build_problem


def test_controller_grows_and_caps():
    ctl = TimeController(100.0, 1.0, 4.0, growth=2.0)
    sizes = []
    t = 0.0
    while not ctl.done(t):
        dt, last = ctl.step(t)
        t = ctl.t_final if last else t + dt
        sizes.append(dt)
        ctl.accept()
    assert sizes[:4] == [1.0, 2.0, 4.0, 4.0]
    assert t == 100.0
    assert sum(sizes) == pytest.approx(100.0)


def test_controller_ends_exactly_on_t_final():
    ctl = TimeController(10.0, 3.0, 3.0)
    dt, last = ctl.step(9.0)
    assert (dt, last) == (1.0, True)


def test_chop_below_floor_aborts():
    ctl = TimeController(1.0, 1.0, 1.0, chop_factor=10.0, dt_min=0.05)
    ctl.chop()
    assert ctl.dt == pytest.approx(0.1)
    with pytest.raises(Abort):
        ctl.chop()


@pytest.mark.parametrize(
    "kwargs", [dict(dt_init=0.0), dict(dt_max=-1.0), dict(growth=0.9), dict(chop_factor=1.0), dict(dt_min=0.0)]
)
def test_controller_validation(kwargs):
    args = dict(t_final=1.0, dt_init=0.1, dt_max=1.0)
    args.update(kwargs)
    with pytest.raises(ValueError):
        TimeController(**args)


@settings(max_examples=50, deadline=None)
@given(t_final=st.floats(1.0, 1e4), dt_init=st.floats(0.01, 10.0), growth=st.floats(1.0, 2.0))
def test_schedule_count_bounds(t_final, dt_init, growth):
    n = schedule_step_count(t_final, dt_init, 10 * dt_init, growth)
    # between the counts at constant dt_max and constant dt_init
    assert np.ceil(t_final / (10 * dt_init)) - 1 <= n <= np.ceil(t_final / dt_init) + 1


def test_gas_schedule():
    assert schedule_step_count(1000 * DAY, 1e-3 * DAY, 10 * DAY, 1.1) == 187


def test_first_step_conserves_and_stays_bounded(small_gas):
    pb = build_problem(small_gas)
    st0 = pb.initial_state()
    new, info = pb.coupled.advance_step(st0, small_gas.dt_init)
    assert new.t == pytest.approx(small_gas.dt_init)
    assert info.newton >= 1
    assert np.all(np.isfinite(new.x)) and np.all(np.isfinite(new.u))
    _, _, pc, s, _, _ = pb.flow.entity_state(new.x)
    assert np.all(pc >= 0) and np.all((s >= 0) & (s < 1))
    assert np.all(new.phi > 0) and np.all(new.d_f > 0)


def test_run_respects_max_steps(small_run):
    assert small_run.counters["N_dt"] == 5
    assert len(small_run.log) == 6
    assert not small_run.completed
