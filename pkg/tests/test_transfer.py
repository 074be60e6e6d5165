import json
import math

import numpy as np
import pytest

from reclab.errors import AlignmentError, DomainError
from reclab.measures import DensityMeasure, sample
from reclab.systems import doubling, step, two_slope
from reclab.transfer import (build_ulam, correlation_decay, covariances, green_kubo_variance,
                             holder_envelope, martingale_decomposition, spectrum,
                             stationary_density)

LEB = DensityMeasure.lebesgue()
TWO = DensityMeasure.two_slope()
TWO_EDGES = [0.0, 2 / 3, 1.0]


def half_indicator(bins):
    return np.where(np.arange(bins) < bins // 2, 0.5, -0.5)


def test_two_bin_doubling_matrix():
    op = build_ulam(doubling(), LEB, 2)
    np.testing.assert_allclose(op.matrix, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    assert op.exact


@pytest.mark.parametrize("bins", [4, 16, 64])
def test_dyadic_bins_have_zero_second_eigenvalue(bins):
    op = build_ulam(doubling(), LEB, bins)
    assert spectrum(op).second_modulus == 0.0
    assert np.max(np.abs(op.matrix.sum(axis=1) - 1)) <= 1e-12


def test_two_slope_stationary_density():
    op = build_ulam(two_slope(), TWO, TWO_EDGES, exact=True)
    np.testing.assert_allclose(stationary_density(op), [9 / 8, 3 / 4], atol=1e-10)
    np.testing.assert_allclose(op.matrix, [[2 / 3, 1 / 3], [1, 0]], atol=1e-14)
    sp = spectrum(op)
    assert sp.second_modulus == pytest.approx(1 / 3)
    assert json.loads(sp.to_json())["second_modulus"] == pytest.approx(1 / 3)


def test_alignment_error_and_detection():
    with pytest.raises(AlignmentError):
        build_ulam(two_slope(), TWO, 4, exact=True)
    assert not build_ulam(two_slope(), TWO, 4).exact
    # doubling maps every uniform grid k/n onto itself
    assert build_ulam(doubling(), LEB, 3).exact
    assert not build_ulam(doubling(), LEB, [0.0, 0.3, 1.0]).exact
    with pytest.raises(DomainError):
        build_ulam(doubling(), LEB, 1)


def test_duality_and_mean_preservation():
    rng = np.random.default_rng(0)
    for op in (build_ulam(doubling(), LEB, 32), build_ulam(two_slope(), TWO, TWO_EDGES)):
        for _ in range(10):
            phi, psi = rng.normal(size=(2, op.bins))
            lhs = op.mean(phi * op.koopman(psi))
            rhs = op.mean(op.apply_P(phi) * psi)
            assert abs(lhs - rhs) <= 1e-10
            c = psi - op.mean(psi)
            assert abs(op.mean(op.apply_P(c))) <= 1e-12


def test_duality_against_monte_carlo():
    op = build_ulam(two_slope(), TWO, [0, 4 / 9, 2 / 3, 1])
    assert op.exact
    phi, psi = np.array([1.0, -2.0, 0.5]), np.array([0.3, 1.0, -1.0])
    x = sample(TWO, np.random.default_rng(5), 400_000)
    idx = lambda z: np.searchsorted(op.edges, z, side="right") - 1
    mc = np.mean(phi[idx(x)] * psi[idx(step(two_slope(), x))])
    assert mc == pytest.approx(op.mean(op.apply_P(phi) * psi), abs=0.01)


def test_correlation_decay():
    op = build_ulam(doubling(), LEB, 16)
    phi = half_indicator(16)
    dec = correlation_decay(op, phi, phi, 10)
    assert dec.covariances[0] == pytest.approx(0.25)
    assert np.max(np.abs(dec.covariances[1:])) <= 1e-15 and dec.rate == math.inf
    assert np.all(covariances(op, np.ones(16), phi, 5) == 0)
    two = build_ulam(two_slope(), TWO, [0, 4 / 9, 2 / 3, 1])
    rng = np.random.default_rng(1)
    f = rng.normal(size=3)
    cov = covariances(two, f, f, 30)
    lam2 = spectrum(two).second_modulus
    C = np.max(np.abs(cov[:3]) / lam2 ** np.arange(3)) * 10
    assert np.all(np.abs(cov) <= C * lam2 ** np.arange(31) + 1e-15)


def test_martingale_trivial_cases():
    op = build_ulam(doubling(), LEB, 64)
    const = np.full((6, 64), 2.0)
    dec = martingale_decomposition(op, const)
    for m in range(1, 6):
        assert np.max(np.abs(dec.psi_values(op, m))) <= 1e-12
    phi = np.tile(half_indicator(64), (6, 1))
    dec = martingale_decomposition(op, phi)
    assert np.max(np.abs(dec.h)) <= 1e-15
    np.testing.assert_allclose(dec.psi_values(op, 3)[0][op.matrix[0] > 0], 0.5)


def test_martingale_random_sequences():
    op = build_ulam(doubling(), LEB, 64)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        phis = rng.normal(size=(21, 64))
        phis -= phis @ op.weights[:, None]
        worst = max(worst, martingale_decomposition(op, phis).residual)
    assert worst <= 1e-10
    two = build_ulam(two_slope(), TWO, TWO_EDGES)
    phis = rng.normal(size=(11, 2))
    assert martingale_decomposition(two, phis).residual <= 1e-10


def test_martingale_refuses_inexact_operator():
    with pytest.raises(AlignmentError):
        martingale_decomposition(build_ulam(two_slope(), TWO, 5), np.zeros((3, 5)))


def test_green_kubo():
    op = build_ulam(doubling(), LEB, 64)
    assert abs(green_kubo_variance(op, half_indicator(64)).value - 0.25) <= 1e-12
    assert green_kubo_variance(op, np.zeros(64)).value == 0
    with pytest.raises(DomainError):
        green_kubo_variance(op, np.ones(64))
    two = build_ulam(two_slope(), TWO, TWO_EDGES)
    phi = np.array([0.25, -0.75])
    # independent oracle: sum the matrix series directly
    A = np.array([[2 / 3, 1 / 3], [1.0, 0.0]])
    w = np.array([0.75, 0.25])
    terms = [w @ (phi * (np.linalg.matrix_power(A, k) @ phi)) for k in range(200)]
    oracle = terms[0] + 2 * sum(terms[1:])
    gk = green_kubo_variance(two, phi)
    assert gk.value == pytest.approx(oracle, abs=1e-12)
    assert gk.value == pytest.approx(3 / 32, abs=1e-12)
    assert gk.tail_bound < 1e-80


def test_holder_envelope():
    g = holder_envelope(doubling(), 0.5, 0.1, 0.02)
    assert g(0.9) == 0.0
    assert g(0.5) == 1.0
    assert g(0.61) == pytest.approx(0.5)
    assert g.lipschitz == pytest.approx(50.0)
    z = np.linspace(0, 0.999, 2001)
    vals = g(z)
    d = np.abs(z - 0.5)
    assert np.all(vals[d < 0.1] == 1) and np.all(vals[d >= 0.12] == 0)
    assert np.max(np.abs(np.diff(vals)) / np.diff(z)) <= g.lipschitz + 1e-6
    with pytest.raises(DomainError):
        holder_envelope(doubling(), 0.5, 0.1, 0.0)
