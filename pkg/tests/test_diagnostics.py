import numpy as np
import pytest

from fracporo.diagnostics import COLUMNS, ENERGY_COLUMNS, DiagnosticLog, chord_defect


def test_log_rejects_incomplete_records():
    log = DiagnosticLog()
    with pytest.raises(KeyError):
        log.append({"step": 0})
    log.append({c: 1.0 for c in COLUMNS})
    assert len(log) == 1 and log.last["t"] == 1.0


def test_records_are_finite(small_run):
    for name in ENERGY_COLUMNS + ("dissipation", "mass_nw", "mass_w"):
        assert np.all(np.isfinite(small_run.log.column(name))), name


def test_dissipation_nonnegative_and_cumulative(small_run):
    log = small_run.log
    assert np.all(log.column("dissipation") >= 0)
    np.testing.assert_allclose(np.cumsum(log.column("dissipation")), log.column("dissipation_cum"), rtol=1e-12)


def test_chord_defect_nonnegative(small_run):
    pb = small_run.problem
    st0 = pb.initial_state()
    assert chord_defect(pb.coupled, st0, small_run.state).min() >= -1e-12


def test_injected_mass_grows(small_run):
    inj = small_run.log.column("injected_nw")
    assert inj[0] == 0.0 and np.all(np.diff(inj) > 0)
