"""Radius schedules: explicit scalars ``r_k`` or implicit radii solving
``mu(B(x, r_k(x))) = M_k``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleRadiusError
from .measures import DensityMeasure, ball_measure, max_radius
from .systems import MapSystem, distance

FORMS = ("pow", "logpow", "const", "table")
_SOLVE_TOL = 1e-12


@dataclass(frozen=True)
class SequenceForm:
    """Generator of a positive scalar sequence indexed from ``k = 1``.

    ``pow``: ``scale * k**-gamma``; ``logpow``: ``scale * log(k+1)**-upsilon``;
    ``const``: ``scale``; ``table``: explicit values.
    """

    form: str
    gamma: float = 0.0
    upsilon: float = 0.0
    scale: float = 1.0
    table: tuple[float, ...] = ()

    def __post_init__(self):
        if self.form not in FORMS:
            raise DomainError(f"unknown sequence form {self.form!r}")
        if self.gamma < 0 or self.upsilon < 0 or self.scale < 0:
            raise DomainError("gamma, upsilon and scale must be >= 0")
        if self.form == "table":
            t = np.asarray(self.table, dtype=float)
            if t.size and np.any(np.diff(t) > 0):
                raise DomainError("tabulated sequence must be nonincreasing")
            object.__setattr__(self, "table", tuple(float(v) for v in t))

    def values(self, n: int, start: int = 1) -> np.ndarray:
        k = np.arange(start, start + n, dtype=float)
        if self.form == "pow":
            return self.scale * k ** -self.gamma
        if self.form == "logpow":
            return self.scale * np.log(k + 1.0) ** -self.upsilon
        if self.form == "const":
            return np.full(n, self.scale)
        if start - 1 + n > len(self.table):
            raise DomainError(f"table has {len(self.table)} entries, need {start - 1 + n}")
        return np.asarray(self.table[start - 1:start - 1 + n])

    def to_dict(self) -> dict:
        out: dict = {"form": self.form}
        if self.form == "pow":
            out["gamma"] = self.gamma
        elif self.form == "logpow":
            out["upsilon"] = self.upsilon
        elif self.form == "table":
            out["values"] = list(self.table)
        if self.scale != 1.0 or self.form == "const":
            out["scale"] = self.scale
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceForm":
        return cls(
            d["form"],
            gamma=float(d.get("gamma", 0.0)),
            upsilon=float(d.get("upsilon", 0.0)),
            scale=float(d.get("scale", d.get("value", 1.0))),
            table=tuple(d.get("values", ())),
        )


@dataclass(frozen=True)
class RadiusSchedule:
    """Explicit radii ``r_k`` or target ball masses ``M_k`` (implicit mode).

    ``gamma``/``upsilon`` are the declared Condition-S exponents.
    """

    mode: str
    sequence: SequenceForm
    gamma: float | None = None
    upsilon: float | None = None

    def __post_init__(self):
        if self.mode not in ("explicit", "implicit"):
            raise DomainError(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def implicit(cls, form: str = "pow", **kw) -> "RadiusSchedule":
        return cls("implicit", SequenceForm(form, **kw), gamma=kw.get("gamma"),
                   upsilon=kw.get("upsilon"))

    @classmethod
    def explicit(cls, form: str = "pow", **kw) -> "RadiusSchedule":
        return cls("explicit", SequenceForm(form, **kw), gamma=kw.get("gamma"),
                   upsilon=kw.get("upsilon"))

    def values(self, n: int, start: int = 1) -> np.ndarray:
        """``r_k`` (explicit) or ``M_k`` (implicit) for ``k = start .. start+n-1``."""
        return self.sequence.values(n, start)

    def radii(self, measure: DensityMeasure, system: MapSystem, x, n: int,
              start: int = 1) -> np.ndarray:
        """Radii at centre(s) ``x`` for ``k = start..start+n-1``.

        Returns shape ``(n,)`` when the radii cannot depend on ``x`` and
        ``x.shape[:-1 or 0] + (n,)`` otherwise.
        """
        vals = self.values(n, start)
        if self.mode == "explicit":
            return vals
        if measure.translation_invariant(system):
            origin = np.zeros(2) if system.dimension == 2 else 0.0
            return implicit_radii(measure, system, origin, vals)
        x = np.asarray(x, dtype=float)
        xe = x[..., None, :] if system.dimension == 2 else x[..., None]
        return implicit_radii(measure, system, xe, vals)

    def to_dict(self) -> dict:
        key = "M" if self.mode == "implicit" else "r"
        out = {"mode": self.mode, key: self.sequence.to_dict()}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.upsilon is not None:
            out["upsilon"] = self.upsilon
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RadiusSchedule":
        mode = d.get("mode")
        seq = d.get("M" if mode == "implicit" else "r")
        if seq is None:
            raise DomainError("schedule needs an 'M' (implicit) or 'r' (explicit) entry")
        seq_form = SequenceForm.from_dict(seq)
        gamma = d.get("gamma", seq.get("gamma"))
        return cls(mode, seq_form, gamma=gamma, upsilon=d.get("upsilon"))


@dataclass
class ConditionSReport:
    monotone: bool
    first_violation: int | None
    lower_constant: float
    upper_constant: float
    lower_slope: float
    upper_slope: float
    passed: bool


def check_condition_S(seq, gamma: float, upsilon: float, n_max: int,
                      slope_tol: float = 0.02) -> ConditionSReport:
    """Check monotonicity and ``n**-gamma <~ a_n <~ (log n)**-upsilon``.

    ``seq`` is a schedule, a :class:`SequenceForm` or an array of ``a_1..``.
    The constants are ``min a_n n**gamma`` and ``max a_n (log n)**upsilon``
    over ``2 <= n <= n_max``.  Since finitely many terms always fit some
    constant, the trend of both ratios over the last decade is also fitted;
    a decaying lower ratio or growing upper ratio beyond ``slope_tol`` (in
    log-log units) fails the check.
    """
    if n_max < 2:
        raise DomainError("n_max must be >= 2")
    if isinstance(seq, (RadiusSchedule, SequenceForm)):
        a = seq.values(n_max)
    else:
        a = np.asarray(seq, dtype=float)[:n_max]
        n_max = len(a)
    bad = np.nonzero(np.diff(a) > 0)[0]
    first = int(bad[0]) + 2 if bad.size else None
    if np.any(a <= 0):
        first = first or int(np.argmax(a <= 0)) + 1
        return ConditionSReport(False, first, 0.0, np.inf, -np.inf, np.inf, False)
    n = np.arange(2, n_max + 1, dtype=float)
    lower = a[1:] * n**gamma
    upper = a[1:] * np.log(n) ** upsilon
    tail = n >= max(2.0, n_max / 10.0)
    if np.count_nonzero(tail) >= 2:
        ln = np.log(n[tail])
        lo_slope = float(np.polyfit(ln, np.log(lower[tail]), 1)[0])
        up_slope = float(np.polyfit(ln, np.log(upper[tail]), 1)[0])
    else:
        lo_slope = up_slope = 0.0
    monotone = first is None
    passed = monotone and lo_slope >= -slope_tol and up_slope <= slope_tol
    return ConditionSReport(monotone, first, float(lower.min()), float(upper.max()),
                            lo_slope, up_slope, passed)


def implicit_radii(measure: DensityMeasure, system: MapSystem, x, M) -> np.ndarray:
    """Vectorised bisection for ``mu(B(x, r)) = M`` (broadcasting ``x``, ``M``)."""
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(M <= 0):
        raise DomainError("ball mass M must be > 0")
    rmax = max_radius(system)
    cap = ball_measure(measure, system, x, rmax)
    bad = M > np.asarray(cap) + 1e-15
    if np.any(bad):
        shape = np.broadcast_shapes(np.shape(cap), M.shape)
        idx = np.unravel_index(int(np.argmax(np.broadcast_to(bad, shape))), shape)
        xs = np.broadcast_to(x, shape + ((2,) if system.dimension == 2 else ()))
        raise InfeasibleRadiusError(
            f"M = {np.broadcast_to(M, shape)[idx]!r} exceeds the largest ball measure",
            x=np.array(xs[idx]).tolist(), M=float(np.broadcast_to(M, shape)[idx]))
    shape = np.broadcast_shapes(np.shape(cap), M.shape)
    lo = np.zeros(shape)
    hi = np.full(shape, rmax)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = ball_measure(measure, system, x, mid)
        below = f < M
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(np.abs(f - M) <= _SOLVE_TOL * 0.5) or np.all(hi - lo <= 0):
            break
    f_lo = ball_measure(measure, system, x, lo)
    f_hi = ball_measure(measure, system, x, hi)
    return np.where(np.abs(f_lo - M) <= np.abs(f_hi - M), lo, hi)


def implicit_radius(measure: DensityMeasure, system: MapSystem, x, M: float) -> float:
    """Radius ``r`` with ``|mu(B(x, r)) - M| <= 1e-12``."""
    return float(implicit_radii(measure, system, x, M))


@dataclass
class RadiusField:
    points: np.ndarray
    radii: np.ndarray
    lipschitz_ratio: float


def radius_field(measure: DensityMeasure, system: MapSystem, M: float, points) -> RadiusField:
    """Implicit radii at each sample point and the empirical Lipschitz ratio
    ``max |r(x) - r(y)| / d(x, y)`` over all sampled pairs."""
    pts = np.asarray(points, dtype=float)
    if system.dimension == 2:
        pts = pts.reshape(-1, 2)
    else:
        pts = pts.reshape(-1)
    radii = np.empty(len(pts))
    for i, p in enumerate(pts):
        try:
            radii[i] = implicit_radius(measure, system, p, M)
        except InfeasibleRadiusError as exc:
            raise InfeasibleRadiusError(str(exc), x=p.tolist(), M=M) from exc
    ratio = 0.0
    for i in range(len(pts) - 1):
        d = distance(system, pts[i], pts[i + 1:])
        dr = np.abs(radii[i] - radii[i + 1:])
        ok = d > 0
        if np.any(ok):
            ratio = max(ratio, float(np.max(dr[ok] / d[ok])))
    return RadiusField(pts, radii, ratio)
