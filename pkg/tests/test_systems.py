import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reclab.errors import DomainError, LengthError
from reclab.measures import DensityMeasure, sample
from reclab.systems import (Branch, BitstreamPoint, MapSystem, cat_map, distance, doubling,
                            dyadic, iterate, orbit_hits, step, two_slope)


def test_iterate_doubling_examples():
    assert iterate(doubling(), 0.3, 1) == pytest.approx(0.6)
    assert iterate(doubling(), 0.3, 2) == pytest.approx(0.2)
    assert iterate(doubling(), 0.3, 0) == 0.3


def test_iterate_cat_map():
    np.testing.assert_allclose(iterate(cat_map(), [0.5, 0.5], 1), [0.5, 0.0])


def test_iterate_rejects_points_outside_domain():
    for bad in (1.0, -0.1, float("nan")):
        with pytest.raises(DomainError):
            iterate(doubling(), bad, 1)
    with pytest.raises(DomainError):
        iterate(cat_map(), [0.2, 1.5], 1)


def test_distance_examples():
    assert distance(doubling(), 0.1, 0.9) == pytest.approx(0.2)
    assert distance(cat_map(), [0, 0], [0.5, 0.5]) == pytest.approx(math.sqrt(0.5))
    assert distance(two_slope(), 0.1, 0.9) == pytest.approx(0.8)


def test_orbit_hits_fixed_point_and_period_two():
    assert orbit_hits(doubling(), 0.0, [(0.0, 0.01)] * 7, 7).tolist() == [1] * 7
    third = BitstreamPoint.from_fraction(1, 3)
    hits = orbit_hits(doubling(), third, [(1 / 3, 0.1)] * 8, 8)
    assert hits.tolist() == [0, 1, 0, 1, 0, 1, 0, 1]
    assert orbit_hits(doubling(), 0.2, [], 0).size == 0


def test_orbit_hits_short_stream():
    with pytest.raises(LengthError):
        orbit_hits(doubling(), 0.2, [(0.0, 0.1)] * 3, 5)


def test_validation_of_branches_and_matrices():
    with pytest.raises(DomainError):
        MapSystem("circle-pw-affine", (Branch(0.0, 0.5, 2.0, 0.0),))
    with pytest.raises(DomainError):
        MapSystem("circle-pw-affine", (Branch(0.0, 1.0, 0.5, 0.0),))
    with pytest.raises(DomainError):
        MapSystem("torus-linear", matrix=((1, 1), (0, 1)))
    with pytest.raises(DomainError):
        MapSystem("torus-linear", matrix=((2, 0), (0, 2)))
    # 1.5x on [0, 1/2) has image [0, 3/4), not a union of branch domains
    with pytest.raises(DomainError):
        MapSystem("interval-pw-affine",
                  (Branch(0.0, 0.5, 1.5, 0.0), Branch(0.5, 1.0, 2.0, -1.0)), markov=True)


def test_descriptor_round_trip():
    for system in (doubling(), two_slope(), cat_map(), dyadic(3)):
        back = MapSystem.from_dict(system.to_dict())
        assert back.to_dict() == system.to_dict()
    assert MapSystem.from_dict({"name": "doubling"}).dyadic_power == 1


def test_bitstream_shift_is_exact():
    p = BitstreamPoint.from_fraction(5, 7)
    q = iterate(doubling(), p, 3)
    assert Fraction(5 * 8 % 7, 7) == Fraction(q.value()).limit_denominator(100)
    r = iterate(dyadic(2), BitstreamPoint.random(3), 4)
    assert r.offset == 8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 200), st.integers(0, 200))
def test_bitstream_iteration_composes_exactly(seed, a, b):
    p = BitstreamPoint.random(seed)
    s = doubling()
    left = iterate(s, p, a + b)
    right = iterate(s, iterate(s, p, a), b)
    assert np.array_equal(left.window(128), right.window(128))


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(0, 15), st.integers(0, 15))
def test_float_iteration_composes(x, a, b):
    s = two_slope()
    assert abs(iterate(s, iterate(s, x, a), b) - iterate(s, x, a + b)) <= 2**-40


def test_map_preserves_its_measure():
    rng = np.random.default_rng(0)
    for system, measure in ((two_slope(), DensityMeasure.two_slope()),
                            (doubling(), DensityMeasure.lebesgue())):
        x = sample(measure, rng, 100_000)
        tx = np.array(iterate(system, x[0], 1))  # scalar path
        assert 0 <= tx < 1
        y = np.sort(step(system, x))
        F = measure.cdf(y)
        emp = np.arange(1, len(y) + 1) / len(y)
        assert np.max(np.abs(F - emp)) <= 0.01
