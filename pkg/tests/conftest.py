import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from fracporo.mesh import build_mesh, uniform_breaks
from fracporo.scenarios import builtin_scenario

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def unit_mesh():
    b = uniform_breaks(0.0, 1.0, 0.25)
    return build_mesh((0.0, 1.0, 0.0, 1.0), (), x_breaks=b, y_breaks=b)


@pytest.fixture(scope="session")
def cross_mesh():
    """Unit square with four fractures meeting at the centre; all other
    ends are interior tips."""
    b = uniform_breaks(0.0, 1.0, 0.125)
    c = (0.5, 0.5)
    fractures = ((c, (0.75, 0.5)), (c, (0.25, 0.5)), (c, (0.5, 0.75)), (c, (0.5, 0.25)))
    return build_mesh((0.0, 1.0, 0.0, 1.0), fractures, x_breaks=b, y_breaks=b)


@pytest.fixture(scope="session")
def small_gas():
    """Gas injection case on a coarse 6.25 m fine zone."""
    sc = builtin_scenario("gas_injection_cross")
    return replace(sc, mesh=replace(sc.mesh, h=6.25), snapshots=2)


@pytest.fixture(scope="session")
def regression():
    return json.loads((DATA / "regression.json").read_text())


@pytest.fixture(scope="session")
def small_run(small_gas):
    """First five steps of the coarse gas case."""
    from fracporo.scenarios import run_scenario

    return run_scenario(small_gas, max_steps=5)


_ACCEPTANCE = {}


@pytest.fixture
def criterion(capsys):
    """Record and print the PASS/FAIL line of an acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {title} [{detail}]"
        _ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[key])
