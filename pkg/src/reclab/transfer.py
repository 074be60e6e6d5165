"""Ulam matrices for piecewise-affine maps, spectral diagnostics, the
martingale (reverse-martingale) decomposition and Green-Kubo variances.

Functions on ``[0, 1)`` are represented by their values on bins.  The matrix
``A[i, j] = mu(bin_i cap T^-1 bin_j) / mu(bin_i)`` is the Koopman operator
conditioned on bins (``A psi`` approximates ``psi o T``), and the transfer
operator acts as ``(P phi)_j = sum_i mu_i A[i, j] phi_i / mu_j``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DomainError
from .measures import DensityMeasure
from .systems import MapSystem, distance

_EDGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class UlamOperator:
    edges: np.ndarray
    matrix: np.ndarray
    weights: np.ndarray
    exact: bool

    @property
    def bins(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def koopman(self, psi) -> np.ndarray:
        """Bin averages of ``psi o T`` for ``psi`` constant on bins."""
        return self.matrix @ np.asarray(psi, dtype=float)

    def apply_P(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        return (self.matrix.T @ (self.weights * phi.T).T) / (
            self.weights if phi.ndim == 1 else self.weights[:, None])

    def mean(self, phi) -> float:
        return float(np.dot(self.weights, phi))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lo", "hi", "mu"] + [f"to_{j}" for j in range(self.bins)])
            for i in range(self.bins):
                w.writerow([repr(float(self.edges[i])), repr(float(self.edges[i + 1])),
                            repr(float(self.weights[i]))]
                           + [repr(float(v)) for v in self.matrix[i]])


def _edges_for(bins) -> np.ndarray:
    if np.ndim(bins) == 0:
        b = int(bins)
        if b < 2:
            raise DomainError("need at least 2 bins")
        return np.linspace(0.0, 1.0, b + 1)
    e = np.asarray(bins, dtype=float)
    if e.size < 3 or e[0] != 0.0 or e[-1] != 1.0 or np.any(np.diff(e) <= 0):
        raise DomainError("bin edges must increase from 0 to 1 with at least 2 bins")
    return e


def _on_edges(points, edges) -> bool:
    p = np.mod(np.asarray(points, dtype=float), 1.0)
    p = np.where(np.abs(p - 1.0) <= _EDGE_TOL, 0.0, p)
    idx = np.clip(np.searchsorted(edges, p), 0, len(edges) - 1)
    near = np.minimum(np.abs(edges[idx] - p), np.abs(edges[np.maximum(idx - 1, 0)] - p))
    return bool(np.all(near <= _EDGE_TOL))


def is_aligned(system: MapSystem, measure: DensityMeasure, edges) -> bool:
    """Bins refine the branch partition, map onto unions of bins, and carry a
    constant density each."""
    edges = np.asarray(edges, dtype=float)
    if not (_on_edges(system.partition_points, edges) and _on_edges(measure.knots, edges)):
        return False
    for br in system.branches:
        inside = edges[(edges >= br.a - _EDGE_TOL) & (edges <= br.b + _EDGE_TOL)]
        if not _on_edges(br.slope * inside + br.intercept, edges):
            return False
    return True


def build_ulam(system: MapSystem, measure: DensityMeasure, bins,
               exact: bool | None = None) -> UlamOperator:
    """Ulam matrix with entries computed from exact interval preimages.

    ``bins`` is a bin count (uniform bins) or an edge array.  With
    ``exact=True`` non-aligned bins raise :class:`AlignmentError`; otherwise
    the exactness flag is detected.
    """
    if system.dimension != 1:
        raise DomainError("Ulam matrices are built for interval and circle maps")
    edges = _edges_for(bins)
    aligned = is_aligned(system, measure, edges)
    if exact and not aligned:
        raise AlignmentError("bins must refine the Markov partition and its images")
    nb = len(edges) - 1
    joint = np.zeros((nb, nb))
    for i in range(nb):
        e0, e1 = edges[i], edges[i + 1]
        for br in system.branches:
            p, q = max(br.a, e0), min(br.b, e1)
            if q <= p:
                continue
            s, c = br.slope, br.intercept
            y0, y1 = sorted((s * p + c, s * q + c))
            for m in range(math.floor(y0), math.ceil(y1)):
                # preimage of [edges_j + m, edges_j+1 + m) inside [p, q)
                u = (edges + m - c) / s
                lo = np.minimum(u[:-1], u[1:])
                hi = np.maximum(u[:-1], u[1:])
                lo = np.clip(lo, p, q)
                hi = np.clip(hi, p, q)
                joint[i] += np.maximum(measure.cdf(hi) - measure.cdf(lo), 0.0)
    weights = measure.cdf(edges[1:]) - measure.cdf(edges[:-1])
    A = joint / joint.sum(axis=1, keepdims=True)
    return UlamOperator(edges, A, weights, aligned)


def stationary_vector(op: UlamOperator) -> np.ndarray:
    """Left Perron vector ``pi A = pi`` normalised to sum 1."""
    vals, vecs = np.linalg.eig(op.matrix.T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, k])
    return v / v.sum()


def stationary_density(op: UlamOperator) -> np.ndarray:
    return stationary_vector(op) / op.widths


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    second_modulus: float

    def to_json(self) -> str:
        return json.dumps({"eigenvalues_re": [float(v.real) for v in self.eigenvalues],
                           "eigenvalues_im": [float(v.imag) for v in self.eigenvalues],
                           "second_modulus": self.second_modulus}, sort_keys=True)


def spectrum(op: UlamOperator) -> Spectrum:
    vals = np.linalg.eigvals(op.matrix)
    vals = vals[np.argsort(-np.abs(vals), kind="stable")]
    lam2 = float(np.abs(vals[1])) if len(vals) > 1 else 0.0
    if lam2 < 0.2 and _nilpotent_tail(op):
        lam2 = 0.0
    return Spectrum(vals, lam2)


def _nilpotent_tail(op: UlamOperator) -> bool:
    """Whether ``A - 1 pi`` is nilpotent, i.e. every eigenvalue but 1 is 0.

    Defective zero eigenvalues make ``eigvals`` return values of order
    ``eps**(1/m)``.  Powers of a nilpotent matrix fall from order one to
    zero in a single step, while a genuine eigenvalue decays geometrically.
    """
    pi = stationary_vector(op)
    R = op.matrix - np.outer(np.ones(op.bins), pi)
    Q = R
    prev = float(np.max(np.abs(Q)))
    for _ in range(op.bins):
        if prev < 1e-13:
            return True
        Q = Q @ R
        cur = float(np.max(np.abs(Q)))
        if cur < 1e-13:
            return prev > 1e-6
        if cur > 1e-3 * prev and cur < 1e-8:
            return False
        prev = cur
    return False


@dataclass
class CorrelationDecay:
    covariances: np.ndarray
    rate: float
    second_modulus: float


def _centered(op: UlamOperator, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (op.bins,):
        raise DomainError(f"bin function must have {op.bins} values")
    return f - op.mean(f)


def covariances(op: UlamOperator, phi, psi, k_max: int) -> np.ndarray:
    """``Cov(phi, psi o T^k) = <phi~, A^k psi~>_mu`` for ``k = 0..k_max``."""
    a = _centered(op, phi)
    b = _centered(op, psi)
    out = np.empty(k_max + 1)
    for k in range(k_max + 1):
        out[k] = math.fsum(op.weights * a * b)
        b = op.matrix @ b
    return out


def correlation_decay(op: UlamOperator, phi, psi, k_max: int) -> CorrelationDecay:
    """Covariances and the fitted exponential decay rate ``-slope`` of
    ``log |Cov_k|`` (``inf`` when they vanish after ``k = 0``)."""
    cov = covariances(op, phi, psi, k_max)
    scale = max(abs(cov[0]), 1e-300)
    k = np.arange(1, k_max + 1)
    mask = np.abs(cov[1:]) > 1e-13 * scale
    if np.count_nonzero(mask) >= 2:
        slope = np.polyfit(k[mask], np.log(np.abs(cov[1:][mask])), 1)[0]
        rate = float(-slope)
    else:
        rate = math.inf
    return CorrelationDecay(cov, rate, spectrum(op).second_modulus)


@dataclass
class MartingaleDecomposition:
    """``h[m]`` for ``m = 0..n+1`` and, for ``m = 1..n``, the pair
    ``(phi_m + h_m, h_{m+1})`` representing ``psi_m = phi_m + h_m - h_{m+1} o T``."""

    h: np.ndarray
    psi_pairs: list[tuple[np.ndarray, np.ndarray]] = field(repr=False)
    residual: float

    def psi_values(self, op: UlamOperator, m: int) -> np.ndarray:
        """``psi_m`` on the refined partition ``bin_i cap T^-1 bin_j``."""
        a, b = self.psi_pairs[m - 1]
        return a[:, None] - b[None, :]


def compose_with_T(op: UlamOperator, f) -> np.ndarray:
    """``f o T`` on the refinement ``{bin_i cap T^-1 bin_j}`` (value ``f_j``),
    with NaN on empty cells."""
    f = np.asarray(f, dtype=float)
    return np.where(op.matrix > 0, f[None, :], np.nan)


def apply_P_refined(op: UlamOperator, G) -> np.ndarray:
    """Transfer operator of a function constant on each ``bin_i cap T^-1 bin_j``."""
    G = np.where(op.matrix > 0, G, 0.0)
    return np.einsum("i,ij,ij->j", op.weights, op.matrix, G) / op.weights


def martingale_decomposition(op: UlamOperator, phis, n: int | None = None
                             ) -> MartingaleDecomposition:
    """``h_n = sum_{k=1}^n P^k phi_{n-k}`` via ``h_{m+1} = P(phi_m + h_m)``.

    ``phis[m]`` is ``phi_m`` for ``m = 0..n``.  ``residual`` is
    ``max_m ||P psi_m||_inf`` with ``h_{m+1} o T`` taken on the refined
    partition, so it tests the identity rather than restating it.
    """
    if not op.exact:
        raise AlignmentError("the martingale decomposition needs an exact operator")
    phis = np.asarray(phis, dtype=float)
    if phis.ndim == 1:
        phis = phis[None, :]
    n = phis.shape[0] - 1 if n is None else int(n)
    if n < 1 or phis.shape[0] < n + 1 or phis.shape[1] != op.bins:
        raise DomainError("need phi_0..phi_n as bin vectors")
    h = np.zeros((n + 2, op.bins))
    for m in range(n + 1):
        h[m + 1] = op.apply_P(phis[m] + h[m])
    pairs = []
    res = 0.0
    for m in range(1, n + 1):
        a = phis[m] + h[m]
        b = h[m + 1]
        p_psi = op.apply_P(a) - apply_P_refined(op, compose_with_T(op, b))
        res = max(res, float(np.max(np.abs(p_psi))))
        pairs.append((a, b))
    return MartingaleDecomposition(h, pairs, res)


@dataclass
class GreenKubo:
    value: float
    variance: float
    covariances: np.ndarray
    tail_bound: float


def green_kubo_variance(op: UlamOperator, phi, k_max: int = 200) -> GreenKubo:
    """``Var(phi) + 2 sum_{k=1}^{k_max} Cov(phi, phi o T^k)``.

    ``tail_bound`` is ``2 Var(phi) lambda_2^(k_max+1) / (1 - lambda_2)``,
    the geometric tail implied by the second eigenvalue modulus.
    """
    phi = np.asarray(phi, dtype=float)
    if abs(op.mean(phi)) > 1e-10 * max(1.0, float(np.max(np.abs(phi)))):
        raise DomainError("phi must be centred")
    cov = covariances(op, phi, phi, k_max)
    lam2 = spectrum(op).second_modulus
    tail = 2 * cov[0] * lam2 ** (k_max + 1) / (1 - lam2) if lam2 < 1 else math.inf
    value = math.fsum([cov[0]] + [2 * c for c in cov[1:]])
    return GreenKubo(value, float(cov[0]), cov, float(tail))


@dataclass(frozen=True)
class HolderEnvelope:
    """``g(z) = min(1, dist(z, complement of B(c, r + eps)) / eps)``.

    ``1_B(c, r) <= g <= 1_B(c, r + eps)`` and ``g`` is ``1/eps``-Lipschitz.
    """

    system: MapSystem
    center: object
    radius: float
    eps: float

    def __post_init__(self):
        if self.eps <= 0:
            raise DomainError("eps must be > 0")
        if self.radius < 0:
            raise DomainError("radius must be >= 0")

    @property
    def lipschitz(self) -> float:
        return 1.0 / self.eps

    def __call__(self, z):
        d = distance(self.system, np.asarray(z, dtype=float), np.asarray(self.center, float))
        out = np.clip((self.radius + self.eps - d) / self.eps, 0.0, 1.0)
        return out if np.ndim(out) else float(out)


def holder_envelope(system: MapSystem, center, radius: float, eps: float) -> HolderEnvelope:
    return HolderEnvelope(system, center, float(radius), float(eps))
