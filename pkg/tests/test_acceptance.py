"""Full-scale acceptance criteria.  Each test records one PASS/FAIL line,
printed in the terminal summary."""

import math

import numpy as np
import pytest

from reclab.harness import derive_substream, run_experiment
from reclab.hitstats import recurrence_sums, volume_masses
from reclab.measures import DensityMeasure, sample
from reclab.radii import RadiusSchedule
from reclab.systems import two_slope

pytestmark = pytest.mark.slow


def _record(log, number, title, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {title} ({detail})"
    log.append(line)
    print(line)
    assert passed, line


IMPLICIT_SQRT = {"mode": "implicit", "M": {"form": "pow", "gamma": 0.5}}
EXPLICIT_QUARTER_SQRT = {"mode": "explicit", "r": {"form": "pow", "gamma": 0.5, "scale": 0.25}}


def test_recurrence_clt(acceptance_log):
    rep = run_experiment({"kind": "clt-recurrence", "seed": 101, "n": 100_000,
                          "samples": 2000, "system": {"name": "doubling"},
                          "schedule": IMPLICIT_SQRT, "tolerances": {"ks": 0.06}})
    ks = rep.metric("ks").value
    _record(acceptance_log, 1, "recurrence CLT, KS vs standard normal <= 0.06",
            ks <= 0.06, f"KS = {ks:.4f}")


def test_averaged_gaussian_charfn(acceptance_log):
    rep = run_experiment({"kind": "clt-recurrence", "seed": 102, "n": 100_000,
                          "samples": 2000, "system": {"name": "two-slope"},
                          "schedule": EXPLICIT_QUARTER_SQRT,
                          "params": {"law": "averaged-gaussian", "charfn_t": [0.5, 1.0, 2.0]},
                          "tolerances": {"charfn": 0.05, "ks": 1.0}})
    diffs = [rep.metric(f"charfn_diff_t={t:g}").value for t in (0.5, 1.0, 2.0)]
    _record(acceptance_log, 2, "averaged-Gaussian characteristic function within 0.05",
            max(diffs) <= 0.05, "diffs = " + ", ".join(f"{d:.4f}" for d in diffs))


def test_target_clt(acceptance_log):
    rep = run_experiment({"kind": "clt-target", "seed": 103, "n": 100_000,
                          "samples": 2000, "system": {"name": "doubling"},
                          "schedule": EXPLICIT_QUARTER_SQRT, "tolerances": {"ks": 0.06}})
    ks = rep.metric("ks").value
    _record(acceptance_log, 3, "shrinking-target CLT, KS vs standard normal <= 0.06",
            ks <= 0.06, f"KS = {ks:.4f}, y = {rep.metric('target').value:.4f}")


def test_variance_asymptotics(acceptance_log):
    rep = run_experiment({"kind": "variance-report", "seed": 104, "n": 100_000,
                          "samples": 2000, "system": {"name": "doubling"},
                          "schedule": IMPLICIT_SQRT,
                          "params": {"n_grid": [1000, 10_000, 100_000], "outer": 100,
                                     "inner": 100, "integral_n": 10_000},
                          "tolerances": {"ratio_min": 0.85, "integral": 0.1}})
    ratios = [rep.metric(f"sigma2_over_expected_hits[n={n}]").value
              for n in (1000, 10_000, 100_000)]
    integral = rep.metric("target_ratio_integral[n=10000]").value
    ok = min(ratios) >= 0.85 and abs(integral - 1) <= 0.1
    _record(acceptance_log, 4, "sigma^2/E >= 0.85 and |int s^2/sigma^2 - 1| <= 0.1", ok,
            "ratios = " + ", ".join(f"{r:.3f}" for r in ratios)
            + f"; integral = {integral:.3f}")


def test_l1_profile(acceptance_log):
    rep = run_experiment({"kind": "variance-report", "seed": 105, "n": 1000,
                          "samples": 1000, "system": {"name": "two-slope"},
                          "schedule": EXPLICIT_QUARTER_SQRT,
                          "params": {"n_grid": [1000], "outer": 10, "inner": 2,
                                     "profile_n": 100_000, "profile_outer": 50},
                          "tolerances": {"l1_profile": 0.1}})
    d = rep.metric("l1_profile")
    _record(acceptance_log, 5, "L1 profile distance <= 0.1", d.value <= 0.1,
            f"distance = {d.value:.4f} +- {d.se:.4f}")


def test_martingale_and_green_kubo(acceptance_log):
    rep = run_experiment({"kind": "transfer-diagnostics", "seed": 106,
                          "system": {"name": "doubling"},
                          "params": {"bins": 64, "exact": True, "trials": 100,
                                     "sequence_length": 20, "observable": "half-indicator",
                                     "green_kubo_expected": 0.25},
                          "tolerances": {"martingale": 1e-10, "green_kubo": 1e-10}})
    res = rep.metric("martingale_residual").value
    gk = rep.metric("green_kubo").value
    ok = res <= 1e-10 and abs(gk - 0.25) <= 1e-10
    _record(acceptance_log, 6, "martingale residual <= 1e-10 and Green-Kubo = 1/4", ok,
            f"residual = {res:.2e}, GK = {gk!r}")


def test_short_returns(acceptance_log):
    rep = run_experiment({"kind": "short-returns", "seed": 107, "samples": 1_000_000,
                          "system": {"name": "doubling"},
                          "params": {"r": [0.05, 0.01], "l": list(range(1, 11)),
                                     "closed_form": True, "bound_r": [0.01]},
                          "tolerances": {"se_multiple": 3.0}})
    checked = [m for m in rep.metrics if m.asserted]
    failed = [m.name for m in checked if not m.passed]
    worst = max(abs(m.value - m.target) / m.se for m in checked
                if m.target is not None and m.se)
    _record(acceptance_log, 7, "short returns within 3 SE of 4r, 4r^2; overlap <= M^1.5",
            not failed, f"{len(checked)} checks, worst |z| = {worst:.2f}"
            + (f", failed: {failed}" if failed else ""))


def test_sinai_trick(acceptance_log):
    rep = run_experiment({"kind": "sinai-check", "seed": 108, "n": 20, "samples": 1000,
                          "system": {"name": "golden-mean"},
                          "params": {"window": [-1, 0]},
                          "tolerances": {"telescoping": 1e-12}})
    bad = rep.metric("future_only_violations").value
    res = rep.metric("telescoping_residual").value
    _record(acceptance_log, 8, "Sinai f_n future-only and telescoping residual <= 1e-12",
            bad == 0 and res <= 1e-12, f"violations = {bad}, residual = {res:.2e}")


def test_sbc_ratio(acceptance_log):
    system, measure = two_slope(), DensityMeasure.two_slope()
    schedule = RadiusSchedule.explicit("pow", gamma=0.5, scale=0.25)
    n = 1_000_000
    xs = sample(measure, derive_substream(109, 0), 50)
    hits = recurrence_sums(system, measure, schedule, xs, n).hits[:, 0]
    radii = schedule.values(n)
    good = 0
    for x, count in zip(xs, hits):
        ratio = count / math.fsum(volume_masses(system, float(x), radii))
        good += abs(ratio - measure.density(x)) <= 0.15
    _record(acceptance_log, 9, "SBC ratio within 0.15 of h(x) for >= 80% of points",
            good >= 0.8 * len(xs), f"{good}/{len(xs)} points")


def test_averaged_poisson(acceptance_log):
    rep = run_experiment({"kind": "poisson-count", "seed": 110, "n": 10_000,
                          "samples": 5000, "system": {"name": "doubling"},
                          "params": {"tau": 1.0}, "tolerances": {"tv": 0.1}})
    tv = rep.metric("tv").value
    _record(acceptance_log, 10, "Poisson(1) count law, TV <= 0.1", tv <= 0.1,
            f"TV = {tv:.4f}, mean = {rep.metric('mean_count').value:.3f}")
