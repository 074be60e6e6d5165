import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reclab.errors import DomainError, InfeasibleRadiusError
from reclab.measures import DensityMeasure, ball_measure
from reclab.radii import (RadiusSchedule, SequenceForm, check_condition_S, implicit_radius,
                          radius_field)
from reclab.systems import doubling, two_slope

LEB = DensityMeasure.lebesgue()
TWO = DensityMeasure.two_slope()


def test_condition_S_examples():
    assert check_condition_S(SequenceForm("pow", gamma=0.5), 0.5, 1.0, 10_000).passed
    assert check_condition_S(SequenceForm("logpow", upsilon=1.0), 0.9, 1.0, 10_000).passed
    rep = check_condition_S(np.tile([0.1, 0.2], 50), 0.5, 1.0, 100)
    assert not rep.monotone and rep.first_violation == 2 and not rep.passed


def test_condition_S_detects_too_fast_decay():
    assert not check_condition_S(SequenceForm("pow", gamma=1.0), 0.5, 1.0, 10_000).passed


def test_implicit_radius_examples():
    assert implicit_radius(LEB, doubling(), 0.7, 0.2) == pytest.approx(0.1, abs=1e-12)
    assert implicit_radius(TWO, two_slope(), 0.25, 0.2) == pytest.approx(0.2 / 2.25, abs=1e-12)
    assert implicit_radius(TWO, two_slope(), 2 / 3, 0.15) == pytest.approx(0.08, abs=1e-12)


def test_implicit_radius_errors():
    with pytest.raises(DomainError):
        implicit_radius(LEB, doubling(), 0.3, 0.0)
    with pytest.raises(InfeasibleRadiusError) as info:
        implicit_radius(LEB, doubling(), 0.3, 1.5)
    assert info.value.x == pytest.approx(0.3)
    # the full circle is still reachable with r = 1/2
    assert implicit_radius(LEB, doubling(), 0.3, 1.0) == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(1e-6, 0.9))
def test_defining_equation_and_monotonicity(x, M):
    r = implicit_radius(TWO, two_slope(), x, M)
    assert abs(ball_measure(TWO, two_slope(), x, r) - M) <= 1e-12
    assert implicit_radius(TWO, two_slope(), x, M * 0.9) <= r


def test_radius_field():
    pts = np.linspace(0.01, 0.99, 40)
    f = radius_field(LEB, doubling(), 0.2, pts)
    np.testing.assert_allclose(f.radii, 0.1, atol=1e-12)
    assert f.lipschitz_ratio <= 1e-9
    g = radius_field(TWO, two_slope(), 0.15, np.linspace(0.5, 0.85, 200))
    assert g.lipschitz_ratio <= 1 + 1e-6
    single = radius_field(TWO, two_slope(), 0.15, [0.3])
    assert single.radii.shape == (1,) and single.lipschitz_ratio == 0.0


def test_radius_field_reports_offending_point():
    with pytest.raises(InfeasibleRadiusError) as info:
        radius_field(TWO, two_slope(), 1.5, [0.25, 0.0])
    assert info.value.x == pytest.approx(0.25)


def test_schedule_serialization_and_values():
    s = RadiusSchedule.from_dict({"mode": "implicit", "M": {"form": "pow", "gamma": 0.5},
                                  "upsilon": 1.0})
    assert s.to_dict() == {"mode": "implicit", "M": {"form": "pow", "gamma": 0.5},
                           "gamma": 0.5, "upsilon": 1.0}
    np.testing.assert_allclose(s.values(4), [1, 2**-0.5, 3**-0.5, 0.5])
    e = RadiusSchedule.explicit("const", scale=0.1)
    np.testing.assert_allclose(e.radii(TWO, two_slope(), 0.3, 3), 0.1)
    with pytest.raises(DomainError):
        SequenceForm("table", table=(0.1, 0.2))
    with pytest.raises(DomainError):
        SequenceForm("table", table=(0.2, 0.1)).values(3)
