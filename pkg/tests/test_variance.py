import math

import numpy as np
import pytest

from reclab.errors import DomainError
from reclab.measures import DensityMeasure
from reclab.radii import RadiusSchedule
from reclab.systems import doubling, two_slope
from reclab.variance import (estimate_variance, jackknife_variance, l1_profile_check,
                             variance_ratio_report)

LEB = DensityMeasure.lebesgue()
TWO = DensityMeasure.two_slope()


def test_jackknife_matches_brute_force():
    v = np.random.default_rng(3).normal(size=40)
    est, se = jackknife_variance(v)
    assert est == pytest.approx(np.var(v, ddof=1))
    loo = np.array([np.var(np.delete(v, i), ddof=1) for i in range(v.size)])
    brute = math.sqrt((v.size - 1) / v.size * np.sum((loo - loo.mean()) ** 2))
    assert se == pytest.approx(brute, rel=1e-9)
    with pytest.raises(DomainError):
        jackknife_variance([1.0])


def test_zero_radius_gives_zero_variance():
    sched = RadiusSchedule.explicit("const", scale=0.0)
    est = estimate_variance("sigma2_hat", doubling(), LEB, sched, 200, 20,
                            np.random.default_rng(0))
    assert est.estimate == 0 and est.se == 0


def test_full_radius_gives_zero_variance():
    sched = RadiusSchedule.explicit("const", scale=0.5)
    est = estimate_variance("s2_hat", two_slope(), TWO, sched, 200, 20,
                            np.random.default_rng(0), y=0.5)
    assert est.estimate == 0


def test_half_interval_target_matches_green_kubo():
    sched = RadiusSchedule.explicit("const", scale=0.25)
    n = 10_000
    est = estimate_variance("s2_hat", doubling(), LEB, sched, n, 10_000,
                            np.random.default_rng(1), y=0.25)
    assert 0.23 <= est.estimate / n <= 0.27


def test_kind_and_sample_validation():
    rng = np.random.default_rng(0)
    exp = RadiusSchedule.explicit("const", scale=0.1)
    with pytest.raises(DomainError):
        estimate_variance("sigma2_recurrence", doubling(), LEB, exp, 10, 10, rng)
    with pytest.raises(DomainError):
        estimate_variance("s2_hat", doubling(), LEB, exp, 10, 10, rng)
    with pytest.raises(DomainError):
        estimate_variance("sigma2_hat", doubling(), LEB, exp, 10, 1, rng)
    with pytest.raises(DomainError):
        estimate_variance("nonsense", doubling(), LEB, exp, 10, 10, rng)


def test_degenerate_report_is_flagged():
    sched = RadiusSchedule.explicit("const", scale=0.0)
    rep = variance_ratio_report(doubling(), LEB, sched, [10, 20], 20,
                                np.random.default_rng(0), outer=4)
    for row in rep.rows:
        assert row.ratio_to_hits is None and row.target_ratio_mean is None
        assert any("degenerate" in f for f in row.flags)
    assert {r["estimand"] for r in rep.to_records()} >= {"sigma2_over_expected_hits"}


def test_variance_report_small_run():
    sched = RadiusSchedule.implicit("pow", gamma=0.5)
    rep = variance_ratio_report(doubling(), LEB, sched, [1000, 4000], 400,
                                np.random.default_rng(4), outer=10, inner=40)
    r1, r2 = rep.rows
    assert r2.sigma2.estimate > r1.sigma2.estimate
    for row in rep.rows:
        assert 0.6 <= row.ratio_to_hits <= 1.4
        assert 0 <= row.fraction_outside(0.5) <= 1


def test_l1_profile_lebesgue_and_two_slope():
    sched = RadiusSchedule.explicit("pow", gamma=0.5, scale=0.25)
    leb = l1_profile_check(doubling(), LEB, sched, 2000, 200, np.random.default_rng(0), outer=10)
    np.testing.assert_allclose(leb.profile, 1.0)
    two = l1_profile_check(two_slope(), TWO, sched, 1, 50, np.random.default_rng(0), outer=5)
    assert set(np.round(two.profile, 12)) <= {
        round(math.sqrt((9 / 8) / (33 / 32)), 12), round(math.sqrt((3 / 4) / (33 / 32)), 12)}
    assert math.isfinite(two.distance)
