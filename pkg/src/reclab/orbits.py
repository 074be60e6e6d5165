"""Chunked orbit generation for batches of initial points.

Two kernels: bitstream points under ``x -> 2**j x`` are read off their binary
expansions in one vectorised pass per point; float points are stepped
together, one time step at a time, vectorised across the batch.  Both yield
``(rows, k0, values)`` blocks where ``values[i, t] = T^(k0+t) x_rows[i]``.
"""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError
from .measures import DensityMeasure, sample
from .systems import BitstreamPoint, MapSystem, as_float_point, dyadic_orbit_values, step

MAX_ELEMS = 1 << 22


def is_bitstream(starts) -> bool:
    return isinstance(starts, (list, tuple)) and len(starts) > 0 and all(
        isinstance(p, BitstreamPoint) for p in starts)


def normalize_starts(system: MapSystem, starts):
    """Validate a batch of initial points.

    Returns a list of :class:`BitstreamPoint` or a float array of shape
    ``(B,)`` / ``(B, 2)``.
    """
    if is_bitstream(starts):
        if system.dyadic_power is None:
            raise DomainError("bitstream points need a map of the form x -> 2^j x mod 1")
        return list(starts)
    arr = np.asarray(starts, dtype=float)
    arr = arr.reshape(-1, 2) if system.dimension == 2 else arr.reshape(-1)
    if len(arr):
        as_float_point(system, arr)
    return arr


def start_values(starts) -> np.ndarray:
    if isinstance(starts, list):
        return np.array([p.value() for p in starts])
    return np.asarray(starts)


def draw_points(system: MapSystem, measure: DensityMeasure, rng: np.random.Generator,
                count: int):
    """``count`` mu-distributed initial points in the system's best representation.

    Dyadic maps with Lebesgue measure get random bitstream points (their
    expansions are exactly Lebesgue-distributed); everything else gets floats.
    """
    if system.dyadic_power is not None and measure.is_lebesgue and system.dimension == 1:
        seeds = rng.integers(0, 2**63, size=count)
        return [BitstreamPoint.random(int(s)) for s in seeds]
    return sample(measure, rng, count)


def orbit_blocks(system: MapSystem, starts, n: int, k_start: int = 1,
                 max_elems: int = MAX_ELEMS) -> Iterator[tuple[slice, int, np.ndarray]]:
    """Yield ``(rows, k0, values)`` covering ``T^k x`` for ``k = k_start..k_start+n-1``.

    Within each row the blocks arrive in increasing ``k``.
    """
    starts = normalize_starts(system, starts)
    B = len(starts)
    if B == 0 or n <= 0:
        return
    if isinstance(starts, list):
        j = system.dyadic_power
        group = max(1, min(B, max_elems // n))
        span = n if group > 1 else min(n, max_elems)
        for r0 in range(0, B, group):
            rows = slice(r0, min(B, r0 + group))
            for k0 in range(k_start, k_start + n, span):
                L = min(span, k_start + n - k0)
                vals = np.stack([dyadic_orbit_values(p, j, k0, L) for p in starts[rows]])
                yield rows, k0, vals
        return
    L = max(1, min(n, max_elems // B))
    x = np.array(starts, dtype=float)
    for _ in range(k_start - 1):
        x = step(system, x)
    rows = slice(0, B)
    for k0 in range(k_start, k_start + n, L):
        cnt = min(L, k_start + n - k0)
        block = np.empty((B, cnt) + x.shape[1:])
        for t in range(cnt):
            x = step(system, x)
            block[:, t] = x
        yield rows, k0, block


def orbit(system: MapSystem, x, n: int) -> np.ndarray:
    """``T^k x`` for ``k = 1..n`` for a single point."""
    start = [x] if isinstance(x, BitstreamPoint) else [as_float_point(system, x)]
    parts = [vals[0] for _, _, vals in orbit_blocks(system, start, n)]
    if not parts:
        return np.zeros((0,) + ((2,) if system.dimension == 2 else ()))
    return np.concatenate(parts, axis=0)


def checkpoint_grid(n: int, checkpoints: Sequence[int] | None) -> np.ndarray:
    cps = np.array([n] if checkpoints is None else sorted(set(int(c) for c in checkpoints)))
    if cps.size == 0 or cps[0] < 0 or cps[-1] > n:
        raise DomainError("checkpoints must lie in [0, n]")
    return cps
