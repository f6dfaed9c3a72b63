import math

import numpy as np
import pytest

from stochburgers.noise import (
    ConvolutionState,
    NoisePath,
    coarsen,
    convolution_ibp,
    convolution_path,
    generate_path,
    generate_paths,
    hill_estimator,
    step_convolution,
    sup_norm_convolution,
    verify_convolution_moments,
    verify_convolution_oracle,
)
from stochburgers.spectral import NoiseIntensity, SpectralField
from stochburgers.subordinator import StableSubordinatorSampler


def grid(h, T):
    return np.arange(int(round(T / h)) + 1) * h


def test_empty_grid():
    p = generate_path(StableSubordinatorSampler(1.5, seed=1), 3, [0.0])
    assert p.n_steps == 0 and p.increments.shape == (0, 2, 3)
    assert convolution_path(p, NoiseIntensity(3)).shape == (1, 2, 3)


def test_path_validation():
    with pytest.raises(ValueError):
        NoisePath(np.array([0.0, 0.0]), np.zeros(1), np.zeros((1, 2, 1)))
    with pytest.raises(ValueError):
        NoisePath(np.array([0.0, 1.0]), -np.ones(1), np.zeros((1, 2, 1)))


def test_frozen_increments_are_brownian():
    h = 1e-3
    p = generate_path(StableSubordinatorSampler(1.5, seed=2, frozen=True), 1, grid(h, 100.0))
    x = p.increments[:, 0, 0] / math.sqrt(h)
    v = x**2
    assert abs(v.mean() - 1) <= 3 * v.std(ddof=1) / math.sqrt(v.size)
    np.testing.assert_allclose(p.subordinator[-1], 100.0, rtol=1e-12)


def test_heavy_tails():
    s = StableSubordinatorSampler(1.5, seed=3)
    p = generate_paths(s, 1, [0.0, 0.01], (100_000,))
    x = np.abs(p.increments[..., 0, 0, 0])
    tail = hill_estimator(x, 1000)
    assert tail == pytest.approx(1.5, abs=0.2)
    # the sample fourth moment keeps growing with the ensemble size
    m4 = [np.mean(x[:n] ** 4) for n in (1000, 10_000, 100_000)]
    m1 = [np.mean(x[:n]) for n in (1000, 10_000, 100_000)]
    assert m4[-1] > 10 * m4[0]
    assert max(m1) < 2 * min(m1)


def test_zero_beta():
    q = NoiseIntensity(4, beta=np.zeros(4), check_bounds=False)
    p = generate_paths(StableSubordinatorSampler(1.5, seed=4), 4, grid(0.01, 1.0), (5,))
    assert np.all(convolution_path(p, q) == 0)
    assert np.all(sup_norm_convolution(q, StableSubordinatorSampler(1.5, seed=4), 1.0, 50, 20, 0.5) == 0)


def test_ou_stationary_variance():
    h = 0.01
    q = NoiseIntensity(1, beta=np.ones(1), check_bounds=False)
    p = generate_paths(StableSubordinatorSampler(1.5, seed=5, frozen=True), 1, grid(h, 10.0), (10_000,))
    z = convolution_path(p, q)[:, -1, 0, 0]
    v = z**2
    se = v.std(ddof=1) / math.sqrt(v.size)
    assert abs(v.mean() - 0.5) <= 3 * se + h / 2  # discrete variance is h / (1 - e^{-2h})
    assert abs(v.mean() - h / (1 - math.exp(-2 * h))) <= 3 * se


def test_recursion_matches_ibp_exactly():
    q = NoiseIntensity(6)
    p = generate_paths(StableSubordinatorSampler(1.5, seed=6), 6, grid(0.01, 1.0), (20,))
    z = convolution_path(p, q)
    for j in (1, 37, 100):
        t = p.times[j]
        np.testing.assert_allclose(convolution_ibp(p, q, t), z[:, j], rtol=1e-10, atol=1e-12)
    # midpoint quadrature of the same formula converges to it
    exact = convolution_ibp(p, q, 1.0)
    errs = [np.abs(convolution_ibp(p, q, 1.0, m) - exact).max() for m in (2, 8)]
    assert errs[1] < errs[0] / 10


def test_ibp_between_grid_points():
    q = NoiseIntensity(3)
    p = generate_path(StableSubordinatorSampler(1.5, seed=7), 3, grid(0.1, 1.0))
    z = convolution_path(p, q)
    # after the last jump the convolution only decays
    k2 = np.arange(1, 4.0) ** 2
    t = 0.55
    np.testing.assert_allclose(convolution_ibp(p, q, t), np.exp(-k2 * 0.05) * z[5], rtol=1e-10, atol=1e-13)


def test_linearity_and_step():
    q = NoiseIntensity(4)
    q2 = NoiseIntensity(4, beta=2 * q.beta, check_bounds=False)
    p = generate_path(StableSubordinatorSampler(1.5, seed=8), 4, grid(0.01, 0.5))
    np.testing.assert_allclose(convolution_path(p, q2), 2 * convolution_path(p, q), rtol=1e-14)
    state = ConvolutionState(SpectralField.zeros(4), q)
    for j in range(p.n_steps):
        state = step_convolution(state, 0.01, p.ds[j], p.gauss[j])
    np.testing.assert_allclose(state.z.coeffs, convolution_path(p, q)[-1], rtol=1e-13, atol=1e-15)


def test_coarsen():
    p = generate_paths(StableSubordinatorSampler(1.5, seed=9), 3, grid(0.01, 0.4), (4,))
    c = coarsen(p, 4)
    assert c.n_steps == 10
    np.testing.assert_allclose(c.subordinator[..., -1], p.subordinator[..., -1], rtol=1e-13)
    np.testing.assert_allclose(c.increments.sum(axis=-3), p.increments.sum(axis=-3), rtol=1e-12, atol=1e-14)
    with pytest.raises(ValueError):
        coarsen(p, 3)


def test_moment_order_rejected():
    with pytest.raises(ValueError):
        verify_convolution_moments(NoiseIntensity(4), 1.5, [0.1], p=1.5)


def test_moment_scaling_small():
    rep = verify_convolution_moments(NoiseIntensity(8), 1.5, 2.0 ** np.arange(-8, -2), n_paths=2000, seed=1)
    assert rep.target_slope == pytest.approx(2 / 3)
    assert rep.passed, rep.fitted_slope


def test_oracle_small():
    rep = verify_convolution_oracle(NoiseIntensity(8), 1.5, n_paths=100, seed=2)
    assert np.all(np.diff(rep.errors) < 0)
    assert rep.order > 0.8
