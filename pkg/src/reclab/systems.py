"""Concrete measure-preserving maps on the circle, interval and 2-torus.

Piecewise-affine maps are described by branches ``x -> slope*x + intercept
(mod 1)`` on right-open domains ``[a, b)`` that partition ``[0, 1)``.  Linear
toral automorphisms are described by an integer 2x2 matrix.

Points are plain floats (1D), length-2 arrays (torus) or
:class:`BitstreamPoint` instances.  Bitstream points carry an exact binary
expansion and are the only representation that survives long orbits of maps
of the form ``x -> 2**j x mod 1``: in floating point those orbits collapse to
zero after ~53 steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, LengthError, ReclabError

KINDS = ("circle-pw-affine", "interval-pw-affine", "torus-linear")

_TOL = 1e-12
_BLOCK_BYTES = 4096


@dataclass(frozen=True)
class Branch:
    a: float
    b: float
    slope: float
    intercept: float


@dataclass(frozen=True, eq=False)
class MapSystem:
    """An explicit self-map of the circle, interval or torus.

    Construction validates the descriptor: branch domains must partition
    ``[0, 1)``, every slope must be expanding, torus matrices must be
    hyperbolic and unimodular, and maps declared ``markov`` must send every
    branch domain onto a union of branch domains.
    """

    kind: str
    branches: tuple[Branch, ...] = ()
    matrix: tuple[tuple[int, int], tuple[int, int]] | None = None
    markov: bool = False
    name: str = ""
    _lo: np.ndarray = field(init=False, repr=False)
    _slope: np.ndarray = field(init=False, repr=False)
    _icpt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown system kind {self.kind!r}")
        if self.kind == "torus-linear":
            self._validate_matrix()
            object.__setattr__(self, "_lo", np.zeros(0))
            object.__setattr__(self, "_slope", np.zeros(0))
            object.__setattr__(self, "_icpt", np.zeros(0))
            return
        branches = tuple(
            b if isinstance(b, Branch) else Branch(*b) for b in self.branches
        )
        branches = tuple(sorted(branches, key=lambda br: br.a))
        object.__setattr__(self, "branches", branches)
        self._validate_branches()
        object.__setattr__(self, "_lo", np.array([b.a for b in branches]))
        object.__setattr__(self, "_slope", np.array([b.slope for b in branches]))
        object.__setattr__(self, "_icpt", np.array([b.intercept for b in branches]))
        if self.markov:
            self._validate_markov()

    def _validate_matrix(self):
        if self.matrix is None:
            raise DomainError("torus-linear system needs a matrix")
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2) or np.any(m != np.round(m)):
            raise DomainError("torus matrix must be 2x2 with integer entries")
        object.__setattr__(
            self, "matrix", tuple(tuple(int(v) for v in row) for row in self.matrix)
        )
        if abs(round(np.linalg.det(m))) != 1:
            raise DomainError("torus matrix must have |det| = 1")
        if np.any(np.isclose(np.abs(np.linalg.eigvals(m)), 1.0)):
            raise DomainError("torus matrix has an eigenvalue of modulus 1")

    def _validate_branches(self):
        if not self.branches:
            raise DomainError("piecewise-affine system needs branches")
        edge = 0.0
        for br in self.branches:
            if abs(br.a - edge) > _TOL or br.b <= br.a:
                raise DomainError("branch domains must partition [0, 1)")
            if abs(br.slope) <= 1:
                raise DomainError(f"branch on [{br.a}, {br.b}) is not expanding")
            edge = br.b
        if abs(edge - 1.0) > _TOL:
            raise DomainError("branch domains must partition [0, 1)")

    def _validate_markov(self):
        ends = self.partition_points
        for br in self.branches:
            for x in (br.a, br.b):
                y = (br.slope * x + br.intercept) % 1.0
                gap = np.min(np.abs(ends - y))
                gap = min(gap, abs(1.0 - y))
                if gap > 1e-9:
                    raise DomainError(
                        f"branch [{br.a}, {br.b}) image is not a union of branch domains"
                    )

    @property
    def dimension(self) -> int:
        return 2 if self.kind == "torus-linear" else 1

    @property
    def metric(self) -> str:
        return {"circle-pw-affine": "circle", "interval-pw-affine": "interval",
                "torus-linear": "torus"}[self.kind]

    @property
    def partition_points(self) -> np.ndarray:
        """Branch endpoints in ``[0, 1)``."""
        return np.array([b.a for b in self.branches])

    @property
    def dyadic_power(self) -> int | None:
        """``j`` when the map is ``x -> 2**j x mod 1``, else ``None``."""
        if self.kind == "torus-linear":
            return None
        slopes = {b.slope for b in self.branches}
        if len(slopes) != 1:
            return None
        s = slopes.pop()
        j = round(math.log2(s)) if s > 0 else 0
        if j < 1 or 2.0**j != s:
            return None
        if any(b.intercept != round(b.intercept) for b in self.branches):
            return None
        return j

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "torus-linear":
            out["matrix"] = [list(r) for r in self.matrix]
        else:
            out["branches"] = [
                {"a": b.a, "b": b.b, "slope": b.slope, "intercept": b.intercept}
                for b in self.branches
            ]
            out["markov"] = self.markov
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MapSystem":
        if "kind" not in d and d.get("name") in NAMED_SYSTEMS:
            return NAMED_SYSTEMS[d["name"]]()
        kind = d.get("kind")
        if kind == "torus-linear":
            return cls(kind, matrix=d["matrix"], name=d.get("name", ""))
        branches = tuple(
            Branch(float(b["a"]), float(b["b"]), float(b["slope"]), float(b["intercept"]))
            for b in d.get("branches", ())
        )
        return cls(kind, branches=branches, markov=bool(d.get("markov", False)),
                   name=d.get("name", ""))


def doubling() -> MapSystem:
    return MapSystem("circle-pw-affine", (Branch(0.0, 1.0, 2.0, 0.0),),
                     markov=True, name="doubling")


def dyadic(j: int) -> MapSystem:
    """The circle map ``x -> 2**j x mod 1``."""
    return MapSystem("circle-pw-affine", (Branch(0.0, 1.0, float(2**j), 0.0),),
                     markov=True, name=f"dyadic{j}")


def two_slope() -> MapSystem:
    """Markov interval map with slopes 3/2 on [0, 2/3) and 2 on [2/3, 1).

    Its invariant density is 9/8 on [0, 2/3) and 3/4 on [2/3, 1).
    """
    return MapSystem(
        "interval-pw-affine",
        (Branch(0.0, 2 / 3, 1.5, 0.0), Branch(2 / 3, 1.0, 2.0, -4 / 3)),
        markov=True,
        name="two-slope",
    )


def cat_map() -> MapSystem:
    return MapSystem("torus-linear", matrix=((2, 1), (1, 1)), name="cat")


NAMED_SYSTEMS = {"doubling": doubling, "two-slope": two_slope, "cat": cat_map}


# --- bitstream points -------------------------------------------------------


class RandomBits:
    """Seeded, random-access source of i.i.d. fair bits.

    Bits are produced in fixed blocks; block ``m`` is drawn from a generator
    keyed by ``(*key, m)`` so any window can be read without replaying the
    prefix.
    """

    def __init__(self, entropy: int, key: Sequence[int] = ()):
        self.entropy = int(entropy)
        self.key = tuple(int(k) for k in key)
        self._cache: dict[int, np.ndarray] = {}

    def _block(self, m: int) -> np.ndarray:
        blk = self._cache.get(m)
        if blk is None:
            ss = np.random.SeedSequence(self.entropy, spawn_key=self.key + (m,))
            raw = np.random.Generator(np.random.PCG64(ss)).bytes(_BLOCK_BYTES)
            blk = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[m] = blk
        return blk

    def bits(self, start: int, count: int) -> np.ndarray:
        size = 8 * _BLOCK_BYTES
        first, last = start // size, (start + count - 1) // size if count else start // size
        if count == 0:
            return np.zeros(0, dtype=np.uint8)
        chunk = np.concatenate([self._block(m) for m in range(first, last + 1)])
        off = start - first * size
        return chunk[off:off + count]

    def __repr__(self):
        return f"RandomBits({self.entropy}, key={self.key})"


class RationalBits:
    """Exact binary expansion of a rational number ``p/q`` in ``[0, 1)``."""

    def __init__(self, p: int, q: int):
        if q <= 0 or not 0 <= p < q:
            raise DomainError(f"{p}/{q} is not in [0, 1)")
        self.p, self.q = int(p), int(q)

    def bits(self, start: int, count: int) -> np.ndarray:
        rem = self.p * pow(2, start, self.q) % self.q
        out = np.empty(count, dtype=np.uint8)
        for i in range(count):
            rem *= 2
            if rem >= self.q:
                out[i] = 1
                rem -= self.q
            else:
                out[i] = 0
        return out

    def __repr__(self):
        return f"RationalBits({self.p}, {self.q})"


class BitstreamPoint:
    """A point of ``[0, 1)`` given by its binary expansion, read from ``offset``.

    ``x = sum_i bits[offset + i] 2**-(i+1)``.  Shifting the offset is exactly
    the action of the doubling map.
    """

    def __init__(self, source, offset: int = 0):
        self.source = source
        self.offset = int(offset)

    @classmethod
    def random(cls, entropy: int, key: Sequence[int] = ()) -> "BitstreamPoint":
        return cls(RandomBits(entropy, key))

    @classmethod
    def from_fraction(cls, p: int, q: int) -> "BitstreamPoint":
        return cls(RationalBits(p, q))

    @classmethod
    def from_float(cls, x: float) -> "BitstreamPoint":
        f = Fraction(float(x))
        return cls(RationalBits(f.numerator, f.denominator))

    def shifted(self, k: int) -> "BitstreamPoint":
        return BitstreamPoint(self.source, self.offset + int(k))

    def window(self, count: int, start: int = 0) -> np.ndarray:
        return self.source.bits(self.offset + start, count)

    def value(self) -> float:
        w = self.window(53)
        return float(np.dot(w.astype(float), 0.5 ** np.arange(1, 54)))

    def __float__(self):
        return self.value()

    def __repr__(self):
        return f"BitstreamPoint({self.source!r}, offset={self.offset})"


def windows64(bits: np.ndarray, count: int) -> np.ndarray:
    """Big-endian 64-bit words ``bits[p:p+64]`` for ``p`` in ``range(count)``.

    ``bits`` must hold at least ``count + 63`` entries.
    """
    if len(bits) < count + 63:
        raise LengthError("need count + 63 bits")
    out = np.empty(count, dtype=np.uint64)
    for s in range(8):
        q = len(range(s, count, 8))
        if q == 0:
            continue
        packed = np.packbits(bits[s:s + 8 * (q + 7)])
        win = np.lib.stride_tricks.sliding_window_view(packed, 8)[:q]
        out[s::8] = np.ascontiguousarray(win).view(">u8").ravel()
    return out


def words_to_float(words: np.ndarray) -> np.ndarray:
    return (words >> np.uint64(11)).astype(np.float64) * 2.0**-53


def dyadic_orbit_values(point: BitstreamPoint, j: int, k0: int, count: int) -> np.ndarray:
    """Values of ``T^k x`` for ``k = k0 .. k0+count-1`` under ``x -> 2**j x``."""
    if count <= 0:
        return np.zeros(0)
    span = j * (count - 1) + 1
    bits = point.window(span + 63, start=j * k0)
    return words_to_float(windows64(bits, span)[::j])


# --- point handling and dynamics --------------------------------------------


def as_float_point(system: MapSystem, x) -> np.ndarray:
    """Validate ``x`` and return it as a float array (shape ``()`` or ``(2,)``)."""
    if isinstance(x, BitstreamPoint):
        x = x.value()
    arr = np.asarray(x, dtype=float)
    if system.dimension == 2 and arr.shape[-1:] != (2,):
        raise DomainError("torus points need two coordinates")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr >= 1.0):
        raise DomainError(f"point {x!r} outside [0, 1)^{system.dimension}")
    return arr


def step(system: MapSystem, x: np.ndarray) -> np.ndarray:
    """Apply ``T`` once to an array of float points (no validation)."""
    if system.kind == "torus-linear":
        (m00, m01), (m10, m11) = system.matrix
        x0, x1 = x[..., 0], x[..., 1]
        y = np.stack([m00 * x0 + m01 * x1, m10 * x0 + m11 * x1], axis=-1)
        return y - np.floor(y)
    if len(system.branches) == 1:
        y = system._slope[0] * x + system._icpt[0]
    else:
        idx = np.searchsorted(system._lo, x, side="right") - 1
        y = system._slope[idx] * x + system._icpt[idx]
    y = y - np.floor(y)
    # floor can leave y == 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def iterate(system: MapSystem, x, n: int):
    """Return ``T^n x``.

    Bitstream points are shifted exactly (dyadic maps only); float points are
    iterated in double precision.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    if isinstance(x, BitstreamPoint):
        j = system.dyadic_power
        if j is None:
            raise ReclabError("bitstream points need a map of the form x -> 2^j x mod 1")
        return x.shifted(j * n)
    arr = as_float_point(system, x)
    for _ in range(n):
        arr = step(system, arr)
    if arr.ndim == 0:
        return float(arr)
    return arr


def distance(system: MapSystem, x, y):
    """Metric of the system's phase space, vectorised over leading axes."""
    if isinstance(x, BitstreamPoint):
        x = x.value()
    if isinstance(y, BitstreamPoint):
        y = y.value()
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    metric = system.metric
    if metric == "interval":
        out = d
    else:
        d = np.minimum(d, 1.0 - d)
        out = np.sqrt(np.sum(d * d, axis=-1)) if metric == "torus" else d
    return float(out) if np.ndim(out) == 0 else out


def orbit_hits(system: MapSystem, x, targets: Iterable, n: int) -> np.ndarray:
    """Bit ``k-1`` is 1 iff ``d(T^k x, center_k) < radius_k``, ``k = 1..n``.

    ``targets`` yields ``(center, radius)`` pairs and is consumed in a single
    pass.
    """
    out = np.zeros(n, dtype=np.uint8)
    it = iter(targets)
    bitstream = isinstance(x, BitstreamPoint)
    cur = x if bitstream else as_float_point(system, x)
    for k in range(n):
        try:
            center, radius = next(it)
        except StopIteration:
            raise LengthError(f"target stream ended after {k} of {n} entries") from None
        cur = iterate(system, cur, 1) if bitstream else step(system, cur)
        out[k] = distance(system, cur, center) < radius
    return out
