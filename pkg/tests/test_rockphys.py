import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracporo.errors import DomainError
from fracporo.rockphys import (
    MobilityLaw,
    RockType,
    SaturationLaw,
    capillary_energy,
    capillary_pressure,
    equivalent_pressure,
    mobility,
    saturation,
    saturation_derivative,
)
from fracporo.verify import reference_capillary_energy, reference_equivalent_pressure, reference_saturation

pcs = st.floats(0.0, 50.0, allow_nan=False)
scales = st.sampled_from([10.0, 1e2, 1e4, 2e8])


def test_saturation_vanishes_for_nonpositive_pc():
    law = SaturationLaw("corey", 1e4)
    np.testing.assert_array_equal(saturation(law, np.array([-5.0, 0.0])), [0.0, 0.0])
    assert capillary_energy(law, -3.0) == 0.0


def test_right_derivative_at_kink():
    law = SaturationLaw("corey", 1e4)
    assert saturation_derivative(law, 0.0) == pytest.approx(1e-4)
    assert saturation_derivative(law, -1.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(x=pcs, R=scales)
def test_laws_match_oracles(x, R):
    law = SaturationLaw("corey", R)
    pc = x * R
    assert saturation(law, pc) == pytest.approx(reference_saturation(pc, R), rel=1e-12, abs=0.0)
    assert capillary_energy(law, pc) == pytest.approx(reference_capillary_energy(pc, R), rel=1e-12, abs=0.0)


@settings(max_examples=100, deadline=None)
@given(x=pcs, R=scales, p_w=st.floats(1e3, 1e7))
def test_equivalent_pressure_matches_oracle(x, R, p_w):
    law = SaturationLaw("corey", R)
    p_nw = p_w + x * R
    assert equivalent_pressure(p_nw, p_w, law) == pytest.approx(reference_equivalent_pressure(p_nw, p_w, R), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(a=pcs, b=pcs, R=scales)
def test_chord_inequality(a, b, R):
    # U is the convex conjugate structure: pc (S(pc) - S(q)) >= U(pc) - U(q)
    law = SaturationLaw("corey", R)
    p, q = a * R, b * R
    lhs = p * (saturation(law, p) - saturation(law, q))
    rhs = capillary_energy(law, p) - capillary_energy(law, q)
    assert lhs - rhs >= -1e-12 * R


@settings(max_examples=100, deadline=None)
@given(s=st.floats(0.0, 1.0 - 1e-9), R=scales)
def test_inverse_law(s, R):
    law = SaturationLaw("corey", R)
    assert saturation(law, capillary_pressure(law, s)) == pytest.approx(s, rel=1e-9, abs=1e-15)


def test_inverse_rejects_full_saturation():
    with pytest.raises(DomainError):
        capillary_pressure(SaturationLaw(), 1.0)


def test_energy_small_argument_series_continuous():
    law = SaturationLaw("corey", 1.0)
    x = np.array([0.05 * (1 - 1e-12), 0.05])
    u = capillary_energy(law, x)
    assert u[0] == pytest.approx(u[1], rel=1e-9)
    # U(x) ~ x^2/2 for small x
    assert capillary_energy(law, 1e-6) == pytest.approx(0.5e-12, rel=1e-5)


@pytest.mark.parametrize("kind", ["quadratic_over_mu", "linear_over_mu"])
def test_polynomial_mobilities(kind):
    law = MobilityLaw(kind, "w", 1e-3)
    s = np.linspace(0, 1, 11)
    expected = s**2 if kind == "quadratic_over_mu" else s
    np.testing.assert_allclose(mobility(law, s), expected / 1e-3)


@pytest.mark.parametrize("phase", ["w", "nw"])
def test_van_genuchten_endpoints_and_derivative(phase):
    law = MobilityLaw("van_genuchten_over_mu", phase, 1.0, q=0.328, s_lr=0.4)
    eta, deta = law.evaluate(np.array([0.0, 1.0]))
    # argument is the saturation of the law's own phase
    assert (eta[0], eta[1]) == (0.0, 1.0)
    s = np.linspace(0.05, 0.95, 19)
    if phase == "w":
        s = 0.4 + 0.6 * s
    else:
        s = 0.6 * s
    h = 1e-7
    fd = (law.evaluate(s + h)[0] - law.evaluate(s - h)[0]) / (2 * h)
    np.testing.assert_allclose(law.evaluate(s)[1], fd, rtol=1e-5, atol=1e-9)


def test_mobility_domain():
    law = MobilityLaw("quadratic_over_mu", "w", 1e-3)
    with pytest.raises(DomainError):
        mobility(law, 1.5)
    with pytest.raises(DomainError):
        mobility(law, math.nan)


@pytest.mark.parametrize(
    "kwargs",
    [dict(kind="bogus", phase="w", mu=1.0), dict(kind="linear_over_mu", phase="x", mu=1.0), dict(kind="linear_over_mu", phase="w", mu=0.0)],
)
def test_mobility_validation(kwargs):
    with pytest.raises(ValueError):
        MobilityLaw(**kwargs)


def test_damaged_rock_needs_width():
    sat = SaturationLaw()
    nw, w = MobilityLaw("linear_over_mu", "nw", 1.0), MobilityLaw("linear_over_mu", "w", 1.0)
    with pytest.raises(ValueError):
        RockType(sat, nw, w, tag="+")
    assert RockType(sat, nw, w, tag="+", width=1e-3, porosity=0.1).mobility("nw") is nw
