"""Recurrence and shrinking-target hit counts, Borel-Cantelli ratios and
short-return measurements."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, InfeasibleRadiusError
from .measures import (DensityMeasure, ball_measure, mean_ball_measure, sample)
from .orbits import (checkpoint_grid, normalize_starts, orbit, orbit_blocks, start_values)
from .radii import RadiusSchedule
from .systems import BitstreamPoint, MapSystem, as_float_point, distance, step


@dataclass
class HitSeries:
    """Per-step hit indicators and expected masses for ``k = 1..n``."""

    hits: np.ndarray
    masses: np.ndarray
    normalization: str

    def __post_init__(self):
        if np.any(self.masses < 0) or np.any(self.masses > 1):
            raise DomainError("expected masses must lie in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.hits)

    @property
    def cum_hits(self) -> np.ndarray:
        return np.cumsum(self.hits, dtype=np.int64)

    @property
    def cum_masses(self) -> np.ndarray:
        return np.cumsum(self.masses)

    @property
    def centered(self) -> np.ndarray:
        return self.cum_hits - self.cum_masses


def _point_value(system: MapSystem, x):
    if isinstance(x, BitstreamPoint):
        return x.value()
    arr = as_float_point(system, x)
    return float(arr) if arr.ndim == 0 else arr


def recurrence_series(system: MapSystem, measure: DensityMeasure,
                      schedule: RadiusSchedule, x, n: int) -> HitSeries:
    """``hits_k = 1{d(T^k x, x) < r_k(x)}`` with masses ``M_k`` (implicit)
    or ``mu(B(x, r_k))`` (explicit)."""
    if n < 0:
        raise DomainError("n must be >= 0")
    x0 = _point_value(system, x)
    if n == 0:
        return HitSeries(np.zeros(0, dtype=np.uint8), np.zeros(0), schedule.mode)
    radii = schedule.radii(measure, system, x0, n)
    hits = (distance(system, orbit(system, x, n), x0) < radii).astype(np.uint8)
    if schedule.mode == "implicit":
        masses = schedule.values(n)
    else:
        masses = np.asarray(ball_measure(measure, system, x0, radii), dtype=float)
    return HitSeries(hits, masses, schedule.mode)


def target_series(system: MapSystem, measure: DensityMeasure, schedule: RadiusSchedule,
                  y, x, n: int) -> HitSeries:
    """``hits_k = 1{d(T^k x, y) < r_k}`` with masses ``mu(B(y, r_k))``.

    Implicit schedules use the radii ``r_k(y)`` solved at the target centre.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    y0 = _point_value(system, y)
    if n == 0:
        return HitSeries(np.zeros(0, dtype=np.uint8), np.zeros(0), "target")
    radii = schedule.radii(measure, system, y0, n)
    hits = (distance(system, orbit(system, x, n), y0) < radii).astype(np.uint8)
    masses = np.asarray(np.broadcast_to(ball_measure(measure, system, y0, radii), (n,)),
                        dtype=float)
    return HitSeries(hits, masses, "target")


def volume_masses(system: MapSystem, x, radii) -> np.ndarray:
    """Lebesgue volume ``m(B(x, r_k))`` of each ball."""
    leb = DensityMeasure.lebesgue(system.dimension)
    return np.asarray(ball_measure(leb, system, _point_value(system, x), radii), dtype=float)


@dataclass
class SbcRatio:
    trajectory: np.ndarray
    final: float
    first_index: int | None

    @property
    def undefined_prefix(self) -> int:
        """Number of leading steps with zero reference mass."""
        return len(self.trajectory) if self.first_index is None else self.first_index - 1


def sbc_ratio(series: HitSeries, reference=None) -> SbcRatio:
    """``ratio_n = sum hits / sum reference`` along the series.

    Entries before the reference sum turns positive are NaN;
    ``first_index`` is the first ``n`` (1-based) where the ratio is defined.
    """
    ref = series.masses if reference is None else np.asarray(reference, dtype=float)
    if len(ref) != series.n:
        raise DomainError("reference masses must match the series length")
    den = np.cumsum(ref)
    num = series.cum_hits.astype(float)
    pos = den > 0
    traj = np.full(series.n, np.nan)
    traj[pos] = num[pos] / den[pos]
    if not np.any(pos):
        return SbcRatio(traj, float("nan"), None)
    return SbcRatio(traj, float(traj[-1]), int(np.argmax(pos)) + 1)


# --- batch sums ----------------------------------------------------------------


@dataclass
class BatchSums:
    """Cumulative hit counts and expected masses at checkpoints.

    ``hits`` has shape ``(B, C)`` (or ``(B, Y, C)`` for several targets);
    ``masses`` broadcasts against it.  ``skipped`` marks points whose
    implicit radii were infeasible; their rows hold NaN.
    """

    checkpoints: np.ndarray
    hits: np.ndarray
    masses: np.ndarray
    skipped: np.ndarray

    @property
    def centered(self) -> np.ndarray:
        return self.hits - self.masses

    @property
    def n_skipped(self) -> int:
        return int(np.count_nonzero(self.skipped))


HitFn = Callable[[slice, int, np.ndarray], np.ndarray]


def _accumulate(system, starts, n, cps, hit_fn: HitFn, extra_shape=()) -> np.ndarray:
    B = len(starts)
    out = np.zeros((B,) + extra_shape + (len(cps),))
    running = np.zeros((B,) + extra_shape)
    if n == 0:
        return out
    for rows, k0, vals in orbit_blocks(system, starts, n):
        h = hit_fn(rows, k0, vals)
        cs = np.cumsum(h, axis=-1, dtype=np.int64)
        L = h.shape[-1]
        sel = np.nonzero((cps >= k0) & (cps < k0 + L))[0]
        if sel.size:
            out[rows, ..., sel] = running[rows][..., None] + cs[..., cps[sel] - k0]
        running[rows] += cs[..., -1]
    return out


def _cum_at(values: np.ndarray, cps: np.ndarray) -> np.ndarray:
    cs = np.concatenate([np.zeros(values.shape[:-1] + (1,)),
                         np.cumsum(values, axis=-1)], axis=-1)
    return cs[..., cps]


def _feasible_rows(system, measure, schedule, x0, n):
    """Rows of ``x0`` whose implicit radii exist for every ``k <= n``.

    Schedules are nonincreasing, so feasibility at ``k = 1`` suffices.
    """
    ok = np.ones(len(x0), dtype=bool)
    if schedule.mode == "explicit" or n == 0:
        return ok
    for i, x in enumerate(x0):
        try:
            schedule.radii(measure, system, x, 1)
        except InfeasibleRadiusError:
            ok[i] = False
    return ok


def recurrence_sums(system: MapSystem, measure: DensityMeasure, schedule: RadiusSchedule,
                    starts, n: int, checkpoints: Sequence[int] | None = None) -> BatchSums:
    """Cumulative recurrence hits ``sum_k 1{d(T^k x, x) < r_k(x)}`` for a batch.

    Infeasible implicit schedules are skipped per point and reported.
    """
    cps = checkpoint_grid(n, checkpoints)
    starts = normalize_starts(system, starts)
    x0 = start_values(starts)
    ok = _feasible_rows(system, measure, schedule, x0, n)
    if not np.all(ok):
        keep = np.nonzero(ok)[0]
        hits = np.full((len(x0), len(cps)), np.nan)
        masses = np.full_like(hits, np.nan)
        if keep.size:
            sub = [starts[i] for i in keep] if isinstance(starts, list) else starts[keep]
            inner = recurrence_sums(system, measure, schedule, sub, n, cps)
            hits[keep] = inner.hits
            masses[keep] = np.broadcast_to(inner.masses, inner.hits.shape)
        return BatchSums(cps, hits, masses, ~ok)
    if len(x0) == 0:
        return BatchSums(cps, np.zeros((0, len(cps))), np.zeros(len(cps)),
                         np.zeros(0, dtype=bool))
    invariant = measure.translation_invariant(system)
    shared = schedule.mode == "explicit" or invariant
    if shared:
        radii_all = schedule.radii(measure, system, x0[0], n) if n else np.zeros(0)

    def hit_fn(rows, k0, vals):
        L = vals.shape[1]
        xc = x0[rows]
        if shared:
            r = radii_all[k0 - 1:k0 - 1 + L]
        else:
            r = schedule.radii(measure, system, xc, L, start=k0)
        xe = xc[:, None, :] if system.dimension == 2 else xc[:, None]
        return distance(system, vals, xe) < r

    hits = _accumulate(system, starts, n, cps, hit_fn)
    if schedule.mode == "implicit":
        masses = _cum_at(schedule.values(n), cps)
    elif invariant:
        masses = _cum_at(np.broadcast_to(
            ball_measure(measure, system, x0[0], radii_all), (n,)), cps)
    else:
        masses = np.zeros((len(x0), len(cps)))
        xe = x0[:, None, :] if system.dimension == 2 else x0[:, None]
        step_k = max(1, (1 << 22) // len(x0))
        running = np.zeros(len(x0))
        for k0 in range(0, n, step_k):
            mb = ball_measure(measure, system, xe, radii_all[None, k0:k0 + step_k])
            cs = running[:, None] + np.cumsum(mb, axis=1)
            sel = np.nonzero((cps > k0) & (cps <= k0 + step_k))[0]
            masses[:, sel] = cs[:, cps[sel] - k0 - 1]
            running = cs[:, -1]
    return BatchSums(cps, hits, masses, np.zeros(len(x0), dtype=bool))


def target_sums(system: MapSystem, measure: DensityMeasure, schedule: RadiusSchedule,
                targets, starts, n: int,
                checkpoints: Sequence[int] | None = None) -> BatchSums:
    """Cumulative hits of ``B(y, r_k(y))`` along each orbit, for every target.

    ``targets`` is an array of centres ``(Y,)``/``(Y, 2)``; the result has
    ``hits`` of shape ``(B, Y, C)`` and ``masses`` of shape ``(Y, C)``.
    """
    cps = checkpoint_grid(n, checkpoints)
    starts = normalize_starts(system, starts)
    ys = np.asarray(targets, dtype=float)
    ys = ys.reshape(-1, 2) if system.dimension == 2 else ys.reshape(-1)
    radii = np.stack([np.broadcast_to(schedule.radii(measure, system, y, n), (n,))
                      for y in ys]) if n else np.zeros((len(ys), 0))
    mass_k = np.stack([np.broadcast_to(ball_measure(measure, system, y, radii[i]), (n,))
                       for i, y in enumerate(ys)]) if n else np.zeros((len(ys), 0))
    if schedule.mode == "implicit":
        mass_k = np.broadcast_to(schedule.values(n), mass_k.shape)

    def hit_fn(rows, k0, vals):
        L = vals.shape[1]
        out = np.empty((vals.shape[0], len(ys), L), dtype=bool)
        for i, y in enumerate(ys):
            out[:, i, :] = distance(system, vals, y) < radii[i, k0 - 1:k0 - 1 + L]
        return out

    hits = _accumulate(system, starts, n, cps, hit_fn, extra_shape=(len(ys),))
    masses = _cum_at(np.asarray(mass_k, dtype=float), cps)
    return BatchSums(cps, hits, masses, np.zeros(len(start_values(starts)), dtype=bool))


def recurrence_mass_diagnostic(system: MapSystem, measure: DensityMeasure,
                               schedule: RadiusSchedule, starts, k_max: int) -> dict:
    """Monte Carlo ``mu(E_k)`` for ``k <= k_max`` next to ``M_k``.

    In implicit mode the batch series substitute ``M_k`` for ``mu(E_k)``;
    this diagnostic shows how close the two are for small ``k``.
    """
    starts = normalize_starts(system, starts)
    x0 = start_values(starts)
    counts = np.zeros(k_max)
    total = 0
    for rows, k0, vals in orbit_blocks(system, starts, k_max):
        xc = x0[rows]
        L = vals.shape[1]
        r = schedule.radii(measure, system, xc, L, start=k0)
        xe = xc[:, None, :] if system.dimension == 2 else xc[:, None]
        counts[k0 - 1:k0 - 1 + L] += np.sum(distance(system, vals, xe) < r, axis=0)
        if k0 == 1:
            total += vals.shape[0]
    p = counts / max(total, 1)
    return {
        "k": np.arange(1, k_max + 1),
        "mu_E": p,
        "se": np.sqrt(p * (1 - p) / max(total, 1)),
        "M": schedule.values(k_max),
    }


# --- short returns -------------------------------------------------------------


def power_branches(system: MapSystem, l: int) -> np.ndarray:
    """Affine pieces ``(a, b, slope, intercept)`` of ``T^l`` (intercepts mod 1).

    Adjacent pieces with equal slope and intercept are merged, so e.g. the
    doubling map gives the single piece ``x -> 2**l x``.
    """
    if system.kind == "torus-linear":
        raise DomainError("power_branches needs a piecewise-affine map")
    pieces = [(0.0, 1.0, 1.0, 0.0)]
    for _ in range(l):
        new = []
        for a, b, s, c in pieces:
            lo, hi = sorted((s * a + c, s * b + c))
            for m in range(int(np.floor(lo)), int(np.ceil(hi)) + 1):
                for br in system.branches:
                    # x with s*x + c - m in [br.a, br.b)
                    u, v = (br.a + m - c) / s, (br.b + m - c) / s
                    u, v = min(u, v), max(u, v)
                    p, q = max(a, u), min(b, v)
                    if q - p > 1e-15:
                        new.append((p, q, br.slope * s, br.slope * (c - m) + br.intercept))
        new.sort()
        merged = []
        for p, q, s, c in new:
            c = c % 1.0
            if merged:
                pa, pb, ps, pc = merged[-1]
                if abs(pb - p) < 1e-13 and ps == s and abs(pc - c) < 1e-9:
                    merged[-1] = (pa, q, ps, pc)
                    continue
            merged.append((p, q, s, c))
        pieces = merged
    return np.array(pieces)


def _ball_intervals(system: MapSystem, y: np.ndarray, r: float):
    """The ball ``B(y, r)`` as two (possibly empty) subintervals of [0, 1)."""
    a, b = y - r, y + r
    if system.metric == "interval":
        z = np.zeros_like(y)
        return [(np.clip(a, 0, 1), np.clip(b, 0, 1)), (z, z)]
    lo1, hi1 = np.maximum(a, 0.0), np.minimum(b, 1.0)
    lo2 = np.where(a < 0, a + 1.0, np.where(b > 1, 0.0, 0.0))
    hi2 = np.where(a < 0, 1.0, np.where(b > 1, b - 1.0, 0.0))
    return [(lo1, hi1), (lo2, hi2)]


def overlap_closed_form(system: MapSystem, measure: DensityMeasure, y, r: float,
                        l: int) -> np.ndarray:
    """``mu(B(y, r) cap T^-l B(y, r))`` for each centre in ``y`` (1D maps)."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    if r == 0:
        return out
    ball = _ball_intervals(system, y, r)
    for a, b, s, c in power_branches(system, l):
        for slo, shi in ball:
            p = np.maximum(slo, a)
            q = np.minimum(shi, b)
            live = q > p
            if not np.any(live):
                continue
            img_lo = np.minimum(s * p + c, s * q + c)
            img_hi = np.maximum(s * p + c, s * q + c)
            for tlo, thi in ball:
                m0 = np.floor(img_lo - thi)
                m1 = np.ceil(img_hi - tlo)
                steps = int(np.max(np.where(live, m1 - m0, 0))) + 1
                for t in range(steps):
                    m = m0 + t
                    u = (tlo + m - c) / s
                    v = (thi + m - c) / s
                    u, v = np.minimum(u, v), np.maximum(u, v)
                    lo = np.maximum(p, u)
                    hi = np.minimum(q, v)
                    ok = live & (hi > lo) & (m <= m1) & (thi > tlo)
                    if np.any(ok):
                        out += np.where(ok, measure.cdf(np.where(ok, hi, 0))
                                        - measure.cdf(np.where(ok, lo, 0)), 0.0)
    return out


@dataclass
class ShortReturns:
    r: float
    l: int
    p_close: float
    p_close_se: float
    overlap: float
    overlap_se: float
    mean_ball: float
    samples: int


def short_returns(system: MapSystem, measure: DensityMeasure, r: float, l: int,
                  samples: int, rng: np.random.Generator,
                  inner_samples: int = 1000) -> ShortReturns:
    """Monte Carlo ``mu{x : d(x, T^l x) < 2r}`` and
    ``int mu(B(y, r) cap T^-l B(y, r)) d mu(y)`` with standard errors.

    The inner measure is exact for piecewise-affine maps (preimages of balls
    are finite unions of intervals) and nested Monte Carlo on the torus.
    Orbits are float; ``T^l`` of a float is exact for dyadic maps while
    ``l`` stays well below 53.
    """
    if l < 1:
        raise DomainError("l must be >= 1")
    if r < 0:
        raise DomainError("r must be >= 0")
    mhat = mean_ball_measure(measure, system, r)
    if r == 0:
        return ShortReturns(r, l, 0.0, 0.0, 0.0, 0.0, 0.0, samples)
    x = sample(measure, rng, samples)
    tx = x
    for _ in range(l):
        tx = step(system, tx)
    close = distance(system, x, tx) < 2 * r
    p = float(np.mean(close))
    p_se = float(np.std(close, ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    y = sample(measure, rng, samples)
    if system.kind == "torus-linear":
        inner = np.empty(samples)
        for i in range(samples):
            z = sample(measure, rng, inner_samples)
            tz = z
            for _ in range(l):
                tz = step(system, tz)
            inner[i] = np.mean((distance(system, z, y[i]) < r) & (distance(system, tz, y[i]) < r))
    else:
        inner = np.empty(samples)
        block = 1 << 18
        for s0 in range(0, samples, block):
            inner[s0:s0 + block] = overlap_closed_form(system, measure, y[s0:s0 + block], r, l)
    ov = float(np.mean(inner))
    ov_se = float(np.std(inner, ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return ShortReturns(r, l, p, p_se, ov, ov_se, mhat, samples)
