import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochburgers.nonlinearity import (
    bilinear,
    bilinear_coeffs,
    burgers_coeffs,
    burgers_derivative_coeffs,
    cutoff,
    cutoff_derivative,
    fit_trilinear_constant,
    trilinear_pairing,
    truncated_nonlinearity,
)
from stochburgers.spectral import SpectralField, inner_coeffs, sobolev_norm_coeffs

SQ = math.sqrt(math.pi)


def brute_force_bilinear(cu, cv):
    """Pi_n(u v') by summing products of complex exponential coefficients."""
    n = cu.shape[-1]

    def to_complex(c):
        z = np.zeros(2 * n + 1, complex)  # index k + n for wavenumber k
        for k in range(1, n + 1):
            a, b = c[0, k - 1] / SQ, c[1, k - 1] / SQ
            z[n + k] = (a - 1j * b) / 2
            z[n - k] = (a + 1j * b) / 2
        return z

    zu, zv = to_complex(cu), to_complex(cv)
    out = np.zeros((2, n))
    for m in range(1, n + 1):
        acc = 0j
        for k in range(-n, n + 1):
            l = m - k
            if -n <= l <= n:
                acc += zu[n + k] * 1j * l * zv[n + l]
        out[0, m - 1] = 2 * acc.real * SQ
        out[1, m - 1] = -2 * acc.imag * SQ
    return out


def test_trig_identities():
    u = SpectralField.mode(4, 1, "sin", SQ)
    np.testing.assert_allclose(bilinear(u, u).coeffs, [[0, 0, 0, 0], [0, SQ / 2, 0, 0]], atol=1e-14)
    cu = SpectralField.mode(4, 1, "cos", SQ)
    sv = SpectralField.mode(4, 2, "sin", SQ)
    np.testing.assert_allclose(bilinear(cu, sv).coeffs, [[SQ, 0, SQ, 0], [0, 0, 0, 0]], atol=1e-14)


@pytest.mark.parametrize("n", [1, 3, 8, 40])
def test_brute_force_oracle(n):
    rng = np.random.default_rng(n)
    cu, cv = rng.standard_normal((2, 2, n))
    np.testing.assert_allclose(bilinear_coeffs(cu, cv), brute_force_bilinear(cu, cv), atol=1e-12 * n**2)
    np.testing.assert_allclose(burgers_coeffs(cu), brute_force_bilinear(cu, cu), atol=1e-12 * n**2)


@given(st.integers(1, 70).flatmap(lambda n: arrays(float, (2, n), elements=st.floats(-5, 5))))
@settings(max_examples=60)
def test_energy_neutrality(c):
    pairing = inner_coeffs(burgers_coeffs(c), c)
    assert abs(pairing) <= 1e-12 * max(sobolev_norm_coeffs(c, 1.0) ** 3, 1e-300)


def test_batched_matches_single():
    rng = np.random.default_rng(5)
    for n in (8, 40):
        c = rng.standard_normal((3, 2, n))
        out = burgers_coeffs(c)
        for i in range(3):
            np.testing.assert_allclose(out[i], burgers_coeffs(c[i]), atol=1e-12)


def test_derivative_matches_finite_difference():
    rng = np.random.default_rng(6)
    for n in (6, 40):
        c, j = rng.standard_normal((2, 2, n))
        eps = 1e-6
        fd = (burgers_coeffs(c + eps * j) - burgers_coeffs(c - eps * j)) / (2 * eps)
        np.testing.assert_allclose(burgers_derivative_coeffs(c, j), fd, atol=1e-6 * n)


def test_trilinear_zero():
    z = SpectralField.zeros(4)
    assert trilinear_pairing(z, z, z) == 0.0


def test_trilinear_constant_bounded():
    rng = np.random.default_rng(7)
    consts = [fit_trilinear_constant(n, 0.75) for n in (8, 16, 32)]
    assert all(0 < c < 1 for c in consts)
    assert consts[2] - consts[1] < consts[1] - consts[0]
    # random triples never beat the fitted supremum
    n = 16
    cu, cv, cw = rng.standard_normal((3, 10_000, 2, n)) * np.arange(1, n + 1.0) ** -1.0
    val = np.abs(inner_coeffs(bilinear_coeffs(cu, cv), cw))
    den = sobolev_norm_coeffs(cu) * sobolev_norm_coeffs(cv, 1.0) * sobolev_norm_coeffs(cw, 0.75)
    assert np.max(val / den) <= consts[1] * (1 + 1e-9)


def test_trilinear_constant_alternative_exponents_grow():
    # with exponents (0, -sigma, sigma) the ratio is unbounded in n
    a, b = (fit_trilinear_constant(n, 0.75, exponents=(0.0, -0.75, 0.75)) for n in (16, 32))
    assert b > 1.7 * a


def test_cutoff_profile():
    assert cutoff(0.3) == 1.0 and cutoff(1.0) == 1.0
    assert cutoff(2.0) == 0.0 and cutoff(4.0) == 0.0
    assert cutoff(1.5) == 0.5
    r = np.linspace(1.001, 1.999, 999)
    assert np.all(np.diff(cutoff(r)) <= 0) and 0 < cutoff(1.2) < 1
    eps = 1e-7
    np.testing.assert_allclose(cutoff_derivative(r), (cutoff(r + eps) - cutoff(r - eps)) / (2 * eps), atol=1e-6)


def test_truncated_regions():
    rng = np.random.default_rng(8)
    base = SpectralField.random(8, rng, decay=1.0)
    R = 0.7
    unit = base * (1 / base.norm(1.0))
    inside = unit * (5 * R)
    np.testing.assert_array_equal(truncated_nonlinearity(inside, R).coeffs, burgers_coeffs(inside.coeffs))
    small = unit * R
    np.testing.assert_array_equal(truncated_nonlinearity(small, R).coeffs, burgers_coeffs(small.coeffs))
    far = unit * (20 * R)
    assert np.all(truncated_nonlinearity(far, R).coeffs == 0.0)
    mid = unit * (7.5 * R)
    np.testing.assert_allclose(truncated_nonlinearity(mid, R).coeffs, 0.5 * burgers_coeffs(mid.coeffs),
                               rtol=1e-12)
    with pytest.raises(ValueError):
        truncated_nonlinearity(mid, 0.0)
