"""Limit laws (Gaussian and Poisson mixtures) and empirical comparisons.

Every law here is a finite mixture, because densities are piecewise
constant: averaging over ``mu`` becomes a weighted sum over density pieces.
CDFs are therefore exact sums of normal (or Poisson) CDFs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError
from .measures import DensityMeasure

LAW_KINDS = ("standard-normal", "averaged-gaussian", "averaged-poisson",
             "variance-profile-gaussian")


@dataclass(frozen=True)
class LimitLaw:
    """A mixture law ``sum_i w_i L(p_i)``.

    Gaussian kinds store component variances in ``params``; the Poisson kind
    stores component rates.  ``literal`` records that a compatibility form
    was requested (see :meth:`averaged_gaussian` and
    :meth:`variance_profile`).
    """

    kind: str
    weights: tuple[float, ...]
    params: tuple[float, ...]
    literal: bool = False

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise DomainError(f"unknown law kind {self.kind!r}")
        w = np.asarray(self.weights, dtype=float)
        p = np.asarray(self.params, dtype=float)
        if w.shape != p.shape or w.size == 0:
            raise DomainError("weights and parameters must be nonempty and aligned")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError("mixture weights must be a probability vector")
        if np.any(p <= 0):
            raise DomainError("component variances / rates must be > 0")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "params", tuple(float(v) for v in p))

    @property
    def discrete(self) -> bool:
        return self.kind == "averaged-poisson"

    @classmethod
    def standard_normal(cls) -> "LimitLaw":
        return cls("standard-normal", (1.0,), (1.0,))

    @classmethod
    def averaged_gaussian(cls, measure: DensityMeasure, literal: bool = False) -> "LimitLaw":
        """Mixture of ``N(0, h(x)/mu(h))`` over ``x ~ mu``.

        ``literal=True`` drops the ``mu(h)`` normalisation (variances ``h``),
        which is *not* consistent with the characteristic function
        ``int exp(-h t^2 / (2 mu(h))) dmu``.
        """
        v = measure.values if literal else measure.values / measure.mean_density
        return cls("averaged-gaussian", tuple(measure.piece_masses), tuple(v), literal)

    @classmethod
    def averaged_poisson(cls, measure: DensityMeasure, tau: float) -> "LimitLaw":
        """``P(k) = int tau^k h^(k+1) exp(-h tau) / k! dm``: a Poisson mixture
        with rates ``tau h_i`` and weights ``h_i |I_i|`` (the ``mu``-masses)."""
        if tau <= 0:
            raise DomainError("tau must be > 0")
        return cls("averaged-poisson", tuple(measure.piece_masses),
                   tuple(tau * measure.values))

    @classmethod
    def variance_profile(cls, variances, weights=None, literal: bool = False) -> "LimitLaw":
        """Gaussian mixture with CF ``E exp(-sigma_x^2 t^2 / 2)``.

        ``literal=True`` gives CF ``E exp(-t^2 / (2 sigma_x^2))`` instead,
        i.e. component variances ``1 / sigma_x^2``.
        """
        v = np.asarray(variances, dtype=float).reshape(-1)
        w = np.full(v.size, 1.0 / v.size) if weights is None else np.asarray(weights, float)
        if literal:
            v = 1.0 / v
        return cls("variance-profile-gaussian", tuple(w), tuple(v), literal)

    def _wp(self):
        return np.asarray(self.weights), np.asarray(self.params)

    def charfn(self, t):
        t = np.asarray(t, dtype=float)
        w, p = self._wp()
        te = t[..., None]
        if self.discrete:
            out = np.sum(w * np.exp(p * (np.exp(1j * te) - 1.0)), axis=-1)
        else:
            out = np.sum(w * np.exp(-0.5 * p * te * te), axis=-1)
        return out if out.ndim else out[()]

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        w, p = self._wp()
        te = t[..., None]
        if self.discrete:
            out = np.sum(w * stats.poisson.cdf(np.floor(te), p), axis=-1)
        else:
            out = np.sum(w * stats.norm.cdf(te / np.sqrt(p)), axis=-1)
        return out if out.ndim else float(out)

    def pdf(self, t):
        if self.discrete:
            raise DomainError("use pmf for the discrete law")
        t = np.asarray(t, dtype=float)
        w, p = self._wp()
        out = np.sum(w * stats.norm.pdf(t[..., None], scale=np.sqrt(p)), axis=-1)
        return out if out.ndim else float(out)

    def pmf(self, k):
        if not self.discrete:
            raise DomainError("pmf is only defined for the Poisson law")
        k = np.asarray(k)
        w, p = self._wp()
        out = np.sum(w * stats.poisson.pmf(k[..., None], p), axis=-1)
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": list(self.weights),
                "params": list(self.params), "literal": self.literal}

    @classmethod
    def from_dict(cls, d: dict) -> "LimitLaw":
        return cls(d["kind"], tuple(d["weights"]), tuple(d["params"]),
                   bool(d.get("literal", False)))


def averaged_gaussian_charfn(measure: DensityMeasure, t):
    """``int exp(-h(x) t^2 / (2 mu(h))) dmu(x)``."""
    return LimitLaw.averaged_gaussian(measure).charfn(t)


def averaged_gaussian_density(measure: DensityMeasure, t, literal: bool = False):
    return LimitLaw.averaged_gaussian(measure, literal=literal).pdf(t)


def averaged_poisson_pmf(measure: DensityMeasure, tau: float, k):
    return LimitLaw.averaged_poisson(measure, tau).pmf(k)


@dataclass(frozen=True)
class EmpiricalDistribution:
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).reshape(-1))
        if v.size == 0:
            raise DomainError("empirical distribution needs at least one sample")
        if np.any(~np.isfinite(v)):
            raise DomainError("samples must be finite")
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(self.values.size)


def ks_statistic(emp: EmpiricalDistribution, law) -> float:
    """``sup_t |F_emp(t) - F(t)|`` for a continuous law (or any callable CDF)."""
    cdf = law.cdf if hasattr(law, "cdf") else law
    x = emp.values
    N = x.size
    F = np.asarray(cdf(x), dtype=float)
    # the empirical CDF jumps at tied values all at once
    upper = np.searchsorted(x, x, side="right") / N
    lower = np.searchsorted(x, x, side="left") / N
    return float(max(np.max(upper - F), np.max(F - lower)))


def empirical_charfn(emp: EmpiricalDistribution, t):
    t = np.asarray(t, dtype=float)
    out = np.mean(np.exp(1j * t[..., None] * emp.values), axis=-1)
    return out if out.ndim else complex(out)


def count_distribution(counts, k_max: int | None = None) -> np.ndarray:
    """Empirical pmf of nonnegative integer counts on ``0..k_max``."""
    c = np.asarray(counts).astype(np.int64).reshape(-1)
    if c.size == 0 or np.any(c < 0):
        raise DomainError("counts must be nonempty and >= 0")
    k_max = int(c.max()) if k_max is None else max(int(k_max), int(c.max()))
    return np.bincount(c, minlength=k_max + 1) / c.size


def tv_distance(counts, law: LimitLaw) -> float:
    """Total variation distance between the empirical count law and ``law``.

    The law's mass beyond the largest observed count is added as one tail
    term, so nothing is truncated.
    """
    emp = count_distribution(counts)
    k = np.arange(emp.size)
    pk = np.asarray(law.pmf(k), dtype=float)
    tail = max(0.0, 1.0 - float(pk.sum()))
    return 0.5 * (float(np.abs(emp - pk).sum()) + tail)


def charfn_table(emp: EmpiricalDistribution, law: LimitLaw, ts) -> list[dict]:
    """Rows ``{t, empirical, theoretical, abs_diff}`` (empirical modulus of the
    complex value is kept via its real and imaginary parts)."""
    rows = []
    for t in ts:
        e = complex(empirical_charfn(emp, float(t)))
        th = complex(law.charfn(float(t)))
        rows.append({"t": float(t), "empirical_re": e.real, "empirical_im": e.imag,
                     "theoretical": th.real, "abs_diff": abs(e - th)})
    return rows
