"""Invariant measures with exact ball measures.

One-dimensional measures have piecewise-constant densities, which makes the
CDF piecewise linear and every ball measure a difference of two CDF values.
On the torus only Lebesgue measure is supported; its balls are round discs of
area ``pi r^2`` as long as ``r <= 1/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnsupportedRadiusError
from .systems import MapSystem


@dataclass(frozen=True, eq=False)
class DensityMeasure:
    """``d mu = h dm`` with ``h`` constant on each ``(lo, hi, h)`` piece.

    ``frostman_exponent`` and ``annuli_exponent`` are declared metadata used
    by :func:`verify_regularity`.
    """

    pieces: tuple[tuple[float, float, float], ...] = ()
    dimension: int = 1
    frostman_exponent: float = 1.0
    annuli_exponent: float = 1.0
    name: str = ""
    _knots: np.ndarray = field(init=False, repr=False)
    _cum: np.ndarray = field(init=False, repr=False)
    _h: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension == 2:
            if self.pieces:
                raise DomainError("2D measures are restricted to Lebesgue measure")
            object.__setattr__(self, "_knots", np.array([0.0, 1.0]))
            object.__setattr__(self, "_cum", np.array([0.0, 1.0]))
            object.__setattr__(self, "_h", np.array([1.0]))
            return
        if self.dimension != 1:
            raise DomainError("dimension must be 1 or 2")
        pieces = tuple(sorted((float(a), float(b), float(h)) for a, b, h in self.pieces))
        object.__setattr__(self, "pieces", pieces)
        if not pieces:
            raise DomainError("a 1D density needs at least one piece")
        edge = 0.0
        for lo, hi, h in pieces:
            if abs(lo - edge) > 1e-12 or hi <= lo:
                raise DomainError("density pieces must partition [0, 1)")
            if h <= 0:
                raise DomainError("density must be bounded below by c > 0")
            edge = hi
        if abs(edge - 1.0) > 1e-12:
            raise DomainError("density pieces must partition [0, 1)")
        knots = np.array([p[0] for p in pieces] + [1.0])
        hs = np.array([p[2] for p in pieces])
        cum = np.concatenate([[0.0], np.cumsum(hs * np.diff(knots))])
        if abs(cum[-1] - 1.0) > 1e-12:
            raise DomainError(f"density integrates to {cum[-1]!r}, not 1")
        cum[-1] = 1.0
        object.__setattr__(self, "_knots", knots)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_h", hs)

    @classmethod
    def lebesgue(cls, dimension: int = 1) -> "DensityMeasure":
        if dimension == 2:
            return cls((), dimension=2, frostman_exponent=2.0, name="lebesgue")
        return cls(((0.0, 1.0, 1.0),), name="lebesgue")

    @classmethod
    def two_slope(cls) -> "DensityMeasure":
        """Invariant density of :func:`reclab.systems.two_slope`."""
        return cls(((0.0, 2 / 3, 9 / 8), (2 / 3, 1.0, 3 / 4)), name="two-slope")

    @property
    def knots(self) -> np.ndarray:
        return self._knots

    @property
    def values(self) -> np.ndarray:
        return self._h

    @property
    def lower_bound(self) -> float:
        return float(self._h.min())

    @property
    def upper_bound(self) -> float:
        return float(self._h.max())

    @property
    def is_lebesgue(self) -> bool:
        return bool(np.all(self._h == 1.0))

    @property
    def piece_masses(self) -> np.ndarray:
        """``mu`` of each density piece."""
        return np.diff(self._cum)

    @property
    def mean_density(self) -> float:
        """``mu(h) = int h dmu = int h^2 dm``."""
        return float(np.sum(self._h**2 * np.diff(self._knots)))

    def translation_invariant(self, system: MapSystem) -> bool:
        """True when ``mu(B(x, r))`` does not depend on ``x``."""
        return self.is_lebesgue and system.metric in ("circle", "torus")

    def density(self, x) -> np.ndarray:
        idx = np.searchsorted(self._knots, np.asarray(x, dtype=float), side="right") - 1
        return self._h[np.clip(idx, 0, len(self._h) - 1)]

    def cdf(self, x) -> np.ndarray:
        return np.interp(x, self._knots, self._cum)

    def periodic_cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        fl = np.floor(x)
        return fl + np.interp(x - fl, self._knots, self._cum)

    def mass(self, lo, hi) -> np.ndarray:
        """``mu([lo, hi))`` for ``0 <= lo <= hi <= 1``."""
        return self.cdf(hi) - self.cdf(lo)

    def to_dict(self) -> dict:
        if self.dimension == 2:
            return {"kind": "lebesgue", "dimension": 2}
        return {"pieces": [{"lo": a, "hi": b, "h": h} for a, b, h in self.pieces]}

    @classmethod
    def from_dict(cls, d: dict) -> "DensityMeasure":
        name = d.get("name")
        if name == "two-slope":
            return cls.two_slope()
        if name == "lebesgue" or d.get("kind") == "lebesgue":
            return cls.lebesgue(int(d.get("dimension", 1)))
        return cls(tuple((p["lo"], p["hi"], p["h"]) for p in d["pieces"]))


def max_radius(system: MapSystem) -> float:
    """Largest admissible ball radius."""
    return 1.0 if system.metric == "interval" else 0.5


def _check_radius(system: MapSystem, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(~np.isfinite(r)):
        raise DomainError("radius must be a finite number >= 0")
    if system.metric != "interval" and np.any(r > 0.5):
        raise UnsupportedRadiusError("radius above 1/2 wraps the ball onto itself")
    return r


def ball_measure(measure: DensityMeasure, system: MapSystem, center, r):
    """Exact ``mu(B(center, r))`` (vectorised in ``center`` and ``r``)."""
    r = _check_radius(system, r)
    if system.metric == "torus":
        if measure.dimension != 2:
            raise DomainError("torus systems need a 2D measure")
        c = np.asarray(center, dtype=float)
        out = np.broadcast_to(np.pi * r * r, np.broadcast_shapes(c.shape[:-1], r.shape))
        return float(out) if out.ndim == 0 else np.array(out)
    c = np.asarray(center, dtype=float)
    if system.metric == "circle":
        out = measure.periodic_cdf(c + r) - measure.periodic_cdf(c - r)
    else:
        out = measure.cdf(np.clip(c + r, 0.0, 1.0)) - measure.cdf(np.clip(c - r, 0.0, 1.0))
    return float(out) if np.ndim(out) == 0 else out


def mean_ball_measure(measure: DensityMeasure, system: MapSystem, r: float) -> float:
    """``int mu(B(x, r)) d mu(x)``, exact for piecewise-constant densities.

    ``x -> mu(B(x, r))`` is piecewise linear with breakpoints at the density
    knots shifted by ``+-r``; on each cell between breakpoints the density is
    constant, so the trapezoid rule is exact.
    """
    r = float(_check_radius(system, r))
    if system.metric == "torus":
        return float(np.pi * r * r)
    if r == 0.0:
        return 0.0
    k = measure.knots
    pts = np.concatenate([k, k + r, k - r])
    if system.metric == "circle":
        pts = np.mod(pts, 1.0)
    pts = np.unique(np.clip(np.concatenate([pts, [0.0, 1.0]]), 0.0, 1.0))
    g = ball_measure(measure, system, pts[:-1], r)
    g_end = ball_measure(measure, system, np.nextafter(pts[1:], 0.0), r)
    h = measure.density(0.5 * (pts[:-1] + pts[1:]))
    return float(np.sum(h * 0.5 * (g + g_end) * np.diff(pts)))


def sample(measure: DensityMeasure, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` i.i.d. ``mu``-distributed points."""
    if count < 0:
        raise DomainError("count must be >= 0")
    if measure.dimension == 2:
        return rng.random((count, 2))
    u = rng.random(count)
    x = np.interp(u, measure._cum, measure._knots)
    return np.minimum(x, np.nextafter(1.0, 0.0))


@dataclass
class RegularityReport:
    frostman_constant: float
    annuli_constant: float
    frostman_exponent: float
    annuli_exponent: float
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_regularity(
    measure: DensityMeasure,
    system: MapSystem,
    radii,
    centers,
    frostman_bound: float | None = None,
    annuli_bound: float | None = None,
) -> RegularityReport:
    """Empirical constants of the Frostman and thin-annuli bounds.

    ``sup mu(B(x, r)) / r**s0`` over the grids, and
    ``sup mu(B(x, r+e) minus B(x, r)) / e**alpha0`` over ``e <= r`` taken
    from the radii grid.  Bounds, when given, are checked and any excess is
    listed in ``violations``.
    """
    radii = np.asarray(radii, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if radii.size == 0 or centers.size == 0:
        raise DomainError("grids must be nonempty")
    if np.any(radii <= 0):
        raise DomainError("radii grid must be positive")
    s0, a0 = measure.frostman_exponent, measure.annuli_exponent
    cshape = centers[:, None, :] if system.metric == "torus" else centers[:, None]
    balls = ball_measure(measure, system, cshape, radii[None, :])
    frost = float(np.max(balls / radii[None, :] ** s0))
    rmax = max_radius(system)
    ann = 0.0
    for r in radii:
        eps = radii[(radii <= r) & (r + radii <= rmax)]
        if eps.size == 0:
            continue
        outer = ball_measure(measure, system, cshape, r + eps[None, :])
        inner = ball_measure(measure, system, cshape, np.full_like(eps, r)[None, :])
        ann = max(ann, float(np.max((outer - inner) / eps[None, :] ** a0)))
    violations = []
    if frostman_bound is not None and frost > frostman_bound * (1 + 1e-12):
        violations.append(f"frostman constant {frost:.6g} exceeds {frostman_bound:.6g}")
    if annuli_bound is not None and ann > annuli_bound * (1 + 1e-12):
        violations.append(f"annuli constant {ann:.6g} exceeds {annuli_bound:.6g}")
    return RegularityReport(frost, ann, s0, a0, violations)
