"""Monte Carlo estimates of recurrence and target variances and their ratios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .hitstats import recurrence_sums, target_sums
from .measures import DensityMeasure, sample
from .orbits import draw_points
from .radii import RadiusSchedule
from .systems import MapSystem

KINDS = ("sigma2_recurrence", "s2_target", "sigma2_hat", "s2_hat")


@dataclass
class VarianceEstimate:
    n: int
    estimate: float
    se: float
    samples: int
    estimand: str
    skipped: int = 0


def jackknife_variance(values) -> tuple[float, float]:
    """Sample variance (ddof=1) and its delete-one jackknife standard error."""
    v = np.asarray(values, dtype=float)
    N = len(v)
    if N < 2:
        raise DomainError("need at least 2 samples")
    est = float(np.var(v, ddof=1))
    if N < 3:
        return est, float(est * np.sqrt(2.0 / (N - 1)))
    # shift for numerical stability; variance is shift invariant
    d = v - v.mean()
    s1, s2 = d.sum(), np.dot(d, d)
    m = (s1 - d) / (N - 1)
    loo = (s2 - d * d - (N - 1) * m * m) / (N - 2)
    se = np.sqrt((N - 1) / N * np.sum((loo - loo.mean()) ** 2))
    return est, float(se)


def _check_kind(kind: str, schedule: RadiusSchedule, y):
    if kind not in KINDS:
        raise DomainError(f"unknown estimand {kind!r}")
    implicit = kind in ("sigma2_recurrence", "s2_target")
    if implicit != (schedule.mode == "implicit"):
        raise DomainError(f"{kind} needs an {'implicit' if implicit else 'explicit'} schedule")
    if kind.startswith("s2") and y is None:
        raise DomainError(f"{kind} needs a target centre y")


def centered_sums(kind: str, system: MapSystem, measure: DensityMeasure,
                  schedule: RadiusSchedule, starts, checkpoints, y=None):
    """Centred sums at ``checkpoints`` (rows: points) and the skip mask."""
    n = int(max(checkpoints))
    if kind.startswith("sigma2"):
        bs = recurrence_sums(system, measure, schedule, starts, n, checkpoints)
        return bs.centered, bs.skipped
    bs = target_sums(system, measure, schedule, y, starts, n, checkpoints)
    return bs.centered[:, 0, :], bs.skipped


def estimate_variance(kind: str, system: MapSystem, measure: DensityMeasure,
                      schedule: RadiusSchedule, n: int, samples: int,
                      rng: np.random.Generator, y=None, starts=None) -> VarianceEstimate:
    """Sample variance of the centred sum over ``mu``-i.i.d. initial points.

    ``sigma2_*`` kinds are recurrence sums, ``s2_*`` kinds hit the fixed
    centre ``y``; ``*_hat`` kinds use explicit radii.  Points whose implicit
    radii are infeasible are skipped and counted.
    """
    _check_kind(kind, schedule, y)
    if samples < 2:
        raise DomainError("need at least 2 samples")
    if starts is None:
        starts = draw_points(system, measure, rng, samples)
    sums, skipped = centered_sums(kind, system, measure, schedule, starts, [n], y)
    vals = sums[~skipped, 0]
    if len(vals) < 2:
        raise DomainError("fewer than 2 feasible samples")
    est, se = jackknife_variance(vals)
    return VarianceEstimate(n, est, se, len(vals), kind, int(np.count_nonzero(skipped)))


@dataclass
class VarianceRow:
    n: int
    sigma2: VarianceEstimate
    expected_hits: float
    ratio_to_hits: float | None
    ratio_to_hits_se: float | None
    target_ratio_mean: float | None
    target_ratio_se: float | None
    target_ratios: np.ndarray = field(repr=False)
    flags: list[str] = field(default_factory=list)

    def fraction_outside(self, eps: float) -> float:
        """Share of sampled targets with ``|s_n^2/sigma_n^2 - 1| > eps``."""
        if self.target_ratios.size == 0:
            return float("nan")
        return float(np.mean(np.abs(self.target_ratios - 1.0) > eps))


@dataclass
class VarianceReport:
    rows: list[VarianceRow]
    outer: int
    inner: int

    def to_records(self) -> list[dict]:
        out = []
        for row in self.rows:
            out.append({"estimand": row.sigma2.estimand, "n": row.n,
                        "value": row.sigma2.estimate, "se": row.sigma2.se})
            out.append({"estimand": "sigma2_over_expected_hits", "n": row.n,
                        "value": row.ratio_to_hits, "se": row.ratio_to_hits_se})
            out.append({"estimand": "mean_target_ratio", "n": row.n,
                        "value": row.target_ratio_mean, "se": row.target_ratio_se})
        return out


def variance_ratio_report(system: MapSystem, measure: DensityMeasure,
                          schedule: RadiusSchedule, n_grid, samples: int,
                          rng: np.random.Generator, outer: int = 100,
                          starts=None, inner: int | None = None,
                          target_n_max: int | None = None) -> VarianceReport:
    """Per ``n``: ``sigma_n^2 / E_n``, ``int s_n^2(y)/sigma_n^2 dmu(y)`` and the
    sampled distribution of ``s_n^2/sigma_n^2``.

    ``sigma_n^2`` uses ``samples`` points; the integral uses ``outer`` targets
    ``y ~ mu`` with ``inner`` (default ``samples // outer``) fresh points
    each, for grid values up to ``target_n_max``.  In implicit mode
    ``E_n = sum M_k``; in explicit mode it is the sample mean of the hit count.
    """
    grid = [int(v) for v in n_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])) or not grid or grid[0] < 1:
        raise DomainError("n grid must be positive and increasing")
    if samples < 2:
        raise DomainError("need at least 2 samples")
    implicit = schedule.mode == "implicit"
    kind = "sigma2_recurrence" if implicit else "sigma2_hat"
    tkind = "s2_target" if implicit else "s2_hat"
    inner = max(2, samples // outer) if inner is None else int(inner)
    if inner < 2 or outer < 1:
        raise DomainError("need outer >= 1 and inner >= 2")
    t_grid = [v for v in grid if target_n_max is None or v <= target_n_max]
    if starts is None:
        starts = draw_points(system, measure, rng, samples)
    bs = recurrence_sums(system, measure, schedule, starts, grid[-1], grid)
    ok = ~bs.skipped
    cen = bs.centered[ok]
    hits = bs.hits[ok]
    ys = sample(measure, rng, outer)
    t_vals = np.full((outer, len(grid)), np.nan)
    for j, y in enumerate(ys):
        if not t_grid:
            break
        pts = draw_points(system, measure, rng, inner)
        tc, _ = centered_sums(tkind, system, measure, schedule, pts, t_grid, y)
        t_vals[j, :len(t_grid)] = np.var(tc, axis=0, ddof=1)
    rows = []
    for c, n in enumerate(grid):
        est, se = jackknife_variance(cen[:, c])
        sig = VarianceEstimate(n, est, se, len(cen), kind, int(np.count_nonzero(~ok)))
        if implicit:
            e_n = float(np.mean(np.broadcast_to(bs.masses, bs.hits.shape)[ok][:, c]))
        else:
            e_n = float(np.mean(hits[:, c]))
        flags = []
        if est <= 0 or e_n <= 0:
            flags.append("degenerate: ratios undefined")
            rows.append(VarianceRow(n, sig, e_n, None, None, None, None,
                                    np.zeros(0), flags))
            continue
        ratio = est / e_n
        ratio_se = se / e_n
        if n not in t_grid:
            rows.append(VarianceRow(n, sig, e_n, float(ratio), float(ratio_se), None, None,
                                    np.zeros(0), flags))
            continue
        tr = t_vals[:, c] / est
        tr_mean = float(np.mean(tr))
        rel_sig = se / est
        tr_se = float(np.sqrt(np.var(tr, ddof=1) / outer + (tr_mean * rel_sig) ** 2))
        rows.append(VarianceRow(n, sig, e_n, float(ratio), float(ratio_se), tr_mean, tr_se,
                                tr, flags))
    return VarianceReport(rows, outer, inner)


@dataclass
class L1Profile:
    n: int
    distance: float
    distance_se: float
    mean_density: float
    sigma2: float
    targets: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)


def l1_profile_check(system: MapSystem, measure: DensityMeasure, schedule: RadiusSchedule,
                     n: int, samples: int, rng: np.random.Generator, outer: int = 50,
                     starts=None) -> L1Profile:
    """Monte Carlo ``int |s_n(y)/sigma_n - sqrt(h(y)/mu(h))| dmu(y)``.

    ``mu(h) = int h^2 dm`` exactly.  ``sigma_n`` and every ``s_n(y)`` are
    estimated from the same ``samples`` orbits (target sums for all ``outer``
    centres share the orbits); the distance is averaged over ``y ~ mu``.
    """
    if schedule.mode != "explicit":
        raise DomainError("the L1 profile check needs explicit radii")
    if measure.dimension != 1:
        raise DomainError("the L1 profile check needs an absolutely continuous 1D measure")
    if starts is None:
        starts = draw_points(system, measure, rng, samples)
    mu_h = measure.mean_density
    sig = recurrence_sums(system, measure, schedule, starts, n, [n])
    sigma2 = float(np.var(sig.centered[:, 0], ddof=1))
    ys = sample(measure, rng, outer)
    tg = target_sums(system, measure, schedule, ys, starts, n, [n])
    s2 = np.var(tg.centered[:, :, 0], axis=0, ddof=1)
    ratios = np.sqrt(s2 / sigma2) if sigma2 > 0 else np.full(outer, np.nan)
    profile = np.sqrt(measure.density(ys) / mu_h)
    dev = np.abs(ratios - profile)
    se = float(np.std(dev, ddof=1) / np.sqrt(outer)) if outer > 1 else float("nan")
    return L1Profile(n, float(np.mean(dev)), se, mu_h, sigma2, ys, ratios, profile)
