"""Subshifts of finite type, cylinder observables and the Sinai trick.

Sequences are finite windows of two-sided sequences: an integer array of
shape ``(N, L)`` together with ``origin``, the column holding coordinate 0.
Left-infinite tails only enter through the fixed pasts used by the map
``G``, which replaces every coordinate ``< 0`` by the stored past of the
symbol at coordinate 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, LengthError


class TruncationWarning(UserWarning):
    """The Sinai series was cut before every past-dependent term vanished."""


def _is_primitive(M: np.ndarray) -> bool:
    n = M.shape[0]
    # Wielandt: a primitive matrix has a positive power of order (n-1)^2 + 1
    P = (M > 0).astype(np.int64)
    Q = P.copy()
    for _ in range((n - 1) ** 2 + 1):
        if np.all(Q > 0):
            return True
        Q = np.minimum((Q @ P), 1)
    return bool(np.all(Q > 0))


@dataclass(frozen=True, eq=False)
class SftSystem:
    """Subshift on ``{0..a-1}`` with allowed transitions ``transition[i, j] = 1``.

    ``pasts[i]`` is an admissible past for symbol ``i``: ``pasts[i][m]`` is
    the symbol at coordinate ``-(m+1)``, stored to depth ``depth``.
    """

    transition: np.ndarray
    theta: float = 0.5
    depth: int = 16
    pasts: np.ndarray | None = None

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=np.int64)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 1:
            raise DomainError("transition matrix must be square")
        if not np.all((T == 0) | (T == 1)):
            raise DomainError("transition matrix must be 0/1")
        if not _is_primitive(T):
            raise DomainError("transition matrix must be primitive")
        if not 0 < self.theta < 1:
            raise DomainError("theta must lie in (0, 1)")
        if self.depth < 1:
            raise DomainError("depth must be >= 1")
        object.__setattr__(self, "transition", T)
        pasts = self._default_pasts() if self.pasts is None else np.asarray(self.pasts)
        if pasts.shape != (T.shape[0], self.depth):
            raise DomainError(f"pasts must have shape {(T.shape[0], self.depth)}")
        for i in range(T.shape[0]):
            word = np.concatenate([pasts[i][::-1], [i]])
            if not self.admissible(word):
                raise DomainError(f"fixed past for symbol {i} is not admissible")
        object.__setattr__(self, "pasts", pasts.astype(np.int64))

    @property
    def alphabet(self) -> int:
        return self.transition.shape[0]

    def _default_pasts(self) -> np.ndarray:
        # smallest allowed predecessor at every step
        out = np.empty((self.alphabet, self.depth), dtype=np.int64)
        for i in range(self.alphabet):
            cur = i
            for m in range(self.depth):
                cur = int(np.nonzero(self.transition[:, cur])[0][0])
                out[i, m] = cur
        return out

    def admissible(self, word) -> bool:
        w = np.asarray(word, dtype=np.int64)
        if w.ndim == 1:
            w = w[None, :]
        if np.any(w < 0) or np.any(w >= self.alphabet):
            return False
        return bool(np.all(self.transition[w[:, :-1], w[:, 1:]] == 1))

    def admissible_words(self, length: int) -> np.ndarray:
        """All admissible words of the given length, lexicographic order."""
        if length < 1:
            return np.zeros((1, 0), dtype=np.int64)
        words = np.arange(self.alphabet)[:, None]
        for _ in range(length - 1):
            nxt = [np.column_stack([words[self.transition[words[:, -1], j] == 1],
                                    np.full(np.count_nonzero(
                                        self.transition[words[:, -1], j] == 1), j)])
                   for j in range(self.alphabet)]
            words = np.concatenate(nxt)
            words = words[np.lexsort(words.T[::-1])]
        return words

    def apply_G(self, seqs: np.ndarray, origin: int) -> np.ndarray:
        """Replace the coordinates ``< 0`` of every row by the fixed past of its
        symbol at coordinate 0."""
        seqs = np.asarray(seqs, dtype=np.int64)
        if origin > self.depth:
            raise LengthError(f"window reaches coordinate {-origin}, fixed pasts stop at "
                              f"{-self.depth}")
        out = seqs.copy()
        if origin:
            out[:, :origin] = self.pasts[seqs[:, origin]][:, :origin][:, ::-1]
        return out

    def to_dict(self) -> dict:
        return {"transition": self.transition.tolist(), "theta": self.theta,
                "depth": self.depth, "pasts": self.pasts.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SftSystem":
        if d.get("name") == "golden-mean":
            return golden_mean(float(d.get("theta", 0.5)), int(d.get("depth", 16)))
        pasts = d.get("pasts")
        return cls(np.array(d["transition"]), float(d.get("theta", 0.5)),
                   int(d.get("depth", 16)), None if pasts is None else np.array(pasts))


def golden_mean(theta: float = 0.5, depth: int = 16) -> SftSystem:
    """Sequences over ``{0, 1}`` without two consecutive 1s."""
    return SftSystem(np.array([[1, 1], [1, 0]]), theta, depth)


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """Stationary Markov chain with a stochastic matrix supported on the
    allowed transitions."""

    sft: SftSystem
    stochastic: np.ndarray
    stationary: np.ndarray = field(init=False)

    def __post_init__(self):
        Q = np.asarray(self.stochastic, dtype=float)
        if Q.shape != self.sft.transition.shape:
            raise DomainError("stochastic matrix has the wrong shape")
        if np.any(Q < 0) or np.any(np.abs(Q.sum(axis=1) - 1) > 1e-12):
            raise DomainError("stochastic matrix rows must be probability vectors")
        if np.any((Q > 0) & (self.sft.transition == 0)):
            raise DomainError("stochastic matrix charges forbidden transitions")
        vals, vecs = np.linalg.eig(Q.T)
        v = np.real(vecs[:, int(np.argmin(np.abs(vals - 1)))])
        object.__setattr__(self, "stochastic", Q)
        object.__setattr__(self, "stationary", v / v.sum())

    @classmethod
    def uniform(cls, sft: SftSystem) -> "MarkovMeasure":
        T = sft.transition.astype(float)
        return cls(sft, T / T.sum(axis=1, keepdims=True))

    def sample(self, rng: np.random.Generator, count: int, length: int) -> np.ndarray:
        """``count`` stationary admissible words of the given length."""
        out = np.empty((count, length), dtype=np.int64)
        cum_pi = np.cumsum(self.stationary)
        cum_Q = np.cumsum(self.stochastic, axis=1)
        a = self.sft.alphabet
        out[:, 0] = np.minimum(np.searchsorted(cum_pi, rng.random(count), side="right"), a - 1)
        for t in range(1, length):
            u = rng.random(count)
            rows = cum_Q[out[:, t - 1]]
            out[:, t] = np.minimum(np.sum(rows <= u[:, None], axis=1), a - 1)
        return out


@dataclass(frozen=True, eq=False)
class CylinderFunction:
    """Observable depending on coordinates ``lo..hi`` through ``table``.

    ``table`` maps each admissible word on the window (as a tuple) to a value.
    """

    sft: SftSystem
    lo: int
    hi: int
    table: dict

    def __post_init__(self):
        if self.hi < self.lo:
            raise DomainError("window must satisfy lo <= hi")
        words = {tuple(int(s) for s in w) for w in self.sft.admissible_words(self.width)}
        keys = {tuple(int(s) for s in k) for k in self.table}
        if keys != words:
            raise DomainError("table must cover exactly the admissible words on the window")
        a = self.sft.alphabet
        lut = np.full(a ** self.width, np.nan)
        for k, v in self.table.items():
            lut[self._code(np.asarray(k)[None, :])[0]] = float(v)
        object.__setattr__(self, "table", {tuple(int(s) for s in k): float(v)
                                           for k, v in self.table.items()})
        object.__setattr__(self, "_lut", lut)

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    @property
    def sup(self) -> float:
        return max(abs(v) for v in self.table.values())

    def _code(self, words: np.ndarray) -> np.ndarray:
        a = self.sft.alphabet
        code = np.zeros(len(words), dtype=np.int64)
        for c in range(words.shape[1]):
            code = code * a + words[:, c]
        return code

    @classmethod
    def from_function(cls, sft: SftSystem, lo: int, hi: int,
                      fn: Callable[[tuple], float]) -> "CylinderFunction":
        words = sft.admissible_words(hi - lo + 1)
        return cls(sft, lo, hi, {tuple(int(s) for s in w): float(fn(tuple(w))) for w in words})

    @classmethod
    def random(cls, sft: SftSystem, lo: int, hi: int,
               rng: np.random.Generator) -> "CylinderFunction":
        words = sft.admissible_words(hi - lo + 1)
        vals = rng.normal(size=len(words))
        return cls(sft, lo, hi, {tuple(int(s) for s in w): float(v)
                                 for w, v in zip(words, vals)})

    def evaluate(self, seqs: np.ndarray, origin: int, shift: int = 0) -> np.ndarray:
        """``phi(sigma^shift x)`` for each row ``x``."""
        a0 = origin + shift + self.lo
        b0 = origin + shift + self.hi + 1
        if a0 < 0 or b0 > seqs.shape[1]:
            raise LengthError("sequence window does not cover the observable")
        return self._lut[self._code(np.asarray(seqs)[:, a0:b0])]

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi,
                "table": [{"word": list(k), "value": v} for k, v in sorted(self.table.items())]}

    @classmethod
    def from_dict(cls, sft: SftSystem, d: dict) -> "CylinderFunction":
        return cls(sft, int(d["lo"]), int(d["hi"]),
                   {tuple(e["word"]): float(e["value"]) for e in d["table"]})


def sft_distance(system: SftSystem, x, y, window: tuple[int, int]) -> float:
    """``theta**s`` with ``s = min{|i| : x_i != y_i}`` over ``window = (lo, hi)``;
    0 when the windows agree."""
    x = np.asarray(x)
    y = np.asarray(y)
    lo, hi = window
    if x.shape != (hi - lo + 1,) or y.shape != x.shape:
        raise DomainError("sequences must cover the window")
    idx = np.nonzero(x != y)[0]
    if idx.size == 0:
        return 0.0
    s = int(np.min(np.abs(idx + lo)))
    return float(system.theta ** s)


@dataclass
class SinaiResult:
    """Future-only observables ``f_1..f_n`` and the correctors ``v_1..v_{n+1}``."""

    sft: SftSystem
    phis: Callable[[int], CylinderFunction]
    n: int
    K: int
    exact: bool
    truncation_bound: float
    f_tables: list[CylinderFunction] = field(repr=False)

    def v(self, k: int, seqs: np.ndarray, origin: int, shift: int = 0) -> np.ndarray:
        """``v_k(sigma^shift x)``."""
        return np.array([math.fsum(t) for t in self._v_terms(k, seqs, origin, shift).T])

    def _v_terms(self, k, seqs, origin, shift):
        base = seqs[:, shift:] if shift else seqs
        o = origin
        terms = []
        g = self.sft.apply_G(base[:, :], o)
        for m in range(self.K + 1):
            phi = self.phis(k + m)
            terms.append(phi.evaluate(base, o, m))
            terms.append(-phi.evaluate(g, o, m))
        return np.array(terms)

    def f(self, k: int, seqs: np.ndarray, origin: int, shift: int = 0) -> np.ndarray:
        """``f_k(sigma^shift x) = phi_k - v_k + v_{k+1} o sigma`` summed exactly."""
        base = seqs[:, shift:] if shift else seqs
        phi = self.phis(k).evaluate(base, origin)[None, :]
        terms = np.concatenate([phi, -self._v_terms(k, base, origin, 0),
                                self._v_terms(k + 1, base, origin, 1)])
        return np.array([math.fsum(t) for t in terms.T])


def _resolve(phis) -> Callable[[int], CylinderFunction]:
    if callable(phis):
        return phis
    seq = list(phis)

    def get(k: int) -> CylinderFunction:
        if k < 1 or k > len(seq):
            raise LengthError(f"phi*_{k} requested but only phi*_1..phi*_{len(seq)} given")
        return seq[k - 1]
    return get


def sinai_future(sft: SftSystem, phis, n: int, K: int | None = None) -> SinaiResult:
    """Build ``v_k = sum_{m=0}^{K} [phi*_{k+m} o sigma^m - phi*_{k+m} o sigma^m o G]``
    and ``f_k = phi*_k - v_k + v_{k+1} o sigma`` for ``k = 1..n``.

    ``phis`` is a list (``phis[0]`` is ``phi*_1``) or a callable ``k -> phi*_k``;
    indices up to ``n + K + 1`` are used.  Terms with ``m >= -lo`` vanish, so
    ``K >= max(-lo) - 1`` is exact; a smaller ``K`` emits a
    :class:`TruncationWarning` carrying the bound ``2 sum sup|phi*|`` of the
    dropped terms.  Each ``f_k`` is tabulated on coordinates ``0..H``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    get = _resolve(phis)
    depth_needed = max(max(0, -get(k).lo) for k in range(1, n + 2))
    depth_needed = max(max(0, -get(k).lo) for k in range(1, n + depth_needed + 2))
    K = max(0, depth_needed - 1) if K is None else int(K)
    if K < 0:
        raise DomainError("K must be >= 0")
    dropped = 0.0
    for k in range(1, n + 2):
        # phi*_{k+m} o sigma^m in v_k survives G only while m < -lo
        for m in range(K + 1, depth_needed):
            if m < -get(k + m).lo:
                dropped += 2 * get(k + m).sup
    exact = K >= depth_needed - 1
    if not exact:
        warnings.warn(TruncationWarning(
            f"K = {K} < {depth_needed - 1}: f_n depends on the past; dropped terms "
            f"bounded by {dropped:.6g}"), stacklevel=2)
    for k in range(1, n + K + 3):
        if -get(k).lo > sft.depth:
            raise LengthError(f"phi*_{k} reaches deeper than the stored pasts")
    res = SinaiResult(sft, get, n, K, exact, dropped, [])
    if exact:
        res.f_tables = [_tabulate_f(res, k) for k in range(1, n + 1)]
    return res


def _future_window(res: SinaiResult, k: int) -> tuple[int, int]:
    hi = 0
    for m in range(res.K + 2):
        phi = res.phis(k + m)
        hi = max(hi, phi.hi + m + 1)
    return 0, hi


def _padding(res: SinaiResult, k: int) -> int:
    return max(max(0, -res.phis(j).lo) for j in range(k, k + res.K + 3))


def _tabulate_f(res: SinaiResult, k: int) -> CylinderFunction:
    """``f_k`` as a cylinder function on coordinates ``0..H``, evaluated on
    ``G`` of each admissible future word."""
    _, H = _future_window(res, k)
    P = _padding(res, k) + 1
    words = res.sft.admissible_words(H + 1)
    seqs = np.zeros((len(words), P + H + 1), dtype=np.int64)
    seqs[:, P:] = words
    seqs = res.sft.apply_G(seqs, P)
    vals = res.f(k, seqs, P)
    return CylinderFunction(res.sft, 0, H, {tuple(int(s) for s in w): float(v)
                                             for w, v in zip(words, vals)})


def future_only_violations(res: SinaiResult, k: int) -> int:
    """Exhaustive check over every admissible word on ``-P..H``: the number of
    words where ``f_k`` differs from its future table (0 means future-only)."""
    if not res.exact:
        raise DomainError("tables exist only for exact truncation")
    table = res.f_tables[k - 1]
    P = _padding(res, k) + 1
    words = res.sft.admissible_words(P + table.hi + 1)
    vals = res.f(k, words, P)
    ref = table.evaluate(words, P)
    return int(np.count_nonzero(vals != ref))


def telescoping_residual(res: SinaiResult, seqs: np.ndarray, origin: int) -> float:
    """``max |sum_{k<=n} (f_k - phi*_k) o sigma^k - (v_{n+1} o sigma^{n+1} - v_1 o sigma)|``."""
    n = res.n
    rows = []
    for k in range(1, n + 1):
        rows.append(res.f(k, seqs, origin, k))
        rows.append(-res.phis(k).evaluate(seqs, origin, k))
    rows.append(-res.v(n + 1, seqs, origin, n + 1))
    rows.append(res.v(1, seqs, origin, 1))
    R = np.array(rows)
    return float(max(abs(math.fsum(c)) for c in R.T))


def sup_bound(res: SinaiResult, k: int) -> float:
    """``sup|phi*_k| + 2 sum_{m=1}^{K+1} sup|phi*_{k+m}|``, a bound on ``sup|f_k|``."""
    return res.phis(k).sup + 2 * sum(res.phis(k + m).sup for m in range(1, res.K + 2))


def sequence_length(res: SinaiResult) -> tuple[int, int]:
    """``(origin, length)`` of windows long enough for :func:`telescoping_residual`."""
    n, K = res.n, res.K
    P = max(max(0, -res.phis(k).lo) for k in range(1, n + K + 3)) + 1
    hi = max(res.phis(k).hi for k in range(1, n + K + 3))
    return P, P + 2 * n + 2 * K + hi + 4


def random_sequences(measure: MarkovMeasure, rng: np.random.Generator, count: int,
                     res: SinaiResult) -> tuple[np.ndarray, int]:
    origin, length = sequence_length(res)
    return measure.sample(rng, count, length), origin


def cylinder_sequence(items: Sequence[CylinderFunction]) -> Callable[[int], CylinderFunction]:
    """Extend ``phi*_1..phi*_N`` periodically so any index is available."""
    items = list(items)

    def get(k: int) -> CylinderFunction:
        if k < 1:
            raise LengthError("phi* is indexed from 1")
        return items[(k - 1) % len(items)]
    return get
