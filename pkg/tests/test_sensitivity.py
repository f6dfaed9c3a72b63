import math
import warnings

import numpy as np
import pytest
from scipy.stats import norm

from stochburgers.noise import generate_paths
from stochburgers.sensitivity import (
    BismutWeight,
    VariationalState,
    bismut_gradient,
    fd_gradient,
    gradient_check,
    linear_growth_constant,
    median_of_means,
    step_variational,
    variational_path,
    variational_growth_bound,
)
from stochburgers.spde import Dynamics, run_on_path
from stochburgers.spectral import NoiseIntensity, SpectralField, wavenumbers
from stochburgers.subordinator import StableSubordinatorSampler

SQ = math.sqrt(math.pi)


def unit(n, row=0, k=1):
    d = np.zeros((2, n))
    d[row, k - 1] = 1.0
    return d


def test_linear_flow_is_heat_semigroup():
    n, h, m = 4, 0.01, 50
    rng = np.random.default_rng(1)
    phi, direction = rng.standard_normal((2, 2, n))
    sampler = StableSubordinatorSampler(1.5, seed=1)
    _, js, _ = variational_path(phi, direction, Dynamics(NoiseIntensity(n), "linear"), h, m, sampler, (3,))
    t = np.arange(m + 1)[:, None, None] * h
    np.testing.assert_allclose(js, np.broadcast_to(np.exp(-wavenumbers(n) ** 2 * t) * direction, js.shape),
                               rtol=1e-12)


def test_flow_at_zero_solution():
    n = 4
    silent = NoiseIntensity(n, beta=np.zeros(n), check_bounds=False)
    state = VariationalState(SpectralField.zeros(n), SpectralField(unit(n, 1, 2)))
    for _ in range(10):
        state = step_variational(state, 0.1, np.zeros((2, n)), Dynamics(silent))
    assert np.all(state.u.coeffs == 0)
    assert state.J.coeffs[1, 1] == pytest.approx(math.exp(-4.0), rel=1e-12)


def test_flow_matches_finite_differences():
    n, h, m = 6, 1e-3, 300
    dyn = Dynamics(NoiseIntensity(n))
    rng = np.random.default_rng(2)
    phi = 0.5 * rng.standard_normal((2, n)) * wavenumbers(n) ** -1.0
    direction = rng.standard_normal((2, n))
    path = generate_paths(StableSubordinatorSampler(1.5, seed=2), n, np.arange(m + 1) * h, (5,))
    eps = 1e-5
    fd = (run_on_path(phi + eps * direction, dyn, path) - run_on_path(phi - eps * direction, dyn, path)) / (2 * eps)
    # the same noise, streamed with the flow
    _, js, _ = variational_path(phi, direction, dyn, h, m, StableSubordinatorSampler(1.5, seed=2), (5,))
    err = np.linalg.norm((js - fd).reshape(5, m + 1, -1), axis=-1)
    scale = np.linalg.norm(js.reshape(5, m + 1, -1), axis=-1)
    assert np.max(err / scale) < 1e-3


def test_flow_is_linear_in_direction():
    n, h, m = 5, 1e-2, 50
    dyn = Dynamics(NoiseIntensity(n))
    rng = np.random.default_rng(3)
    phi, d1, d2 = rng.standard_normal((3, 2, n)) * 0.3
    run = lambda d: variational_path(phi, d, dyn, h, m, StableSubordinatorSampler(1.5, seed=3), (2,))[1]  # noqa
    np.testing.assert_allclose(run(2 * d1 - d2), 2 * run(d1) - run(d2), rtol=1e-10, atol=1e-13)


def test_median_of_means():
    x = np.arange(100.0)
    m, se = median_of_means(x, 10)
    assert m == pytest.approx(np.median([b.mean() for b in np.array_split(x, 10)]))
    assert se > 0
    assert BismutWeight(np.array([2.0]), np.array([4.0])).value[0] == 0.5


def test_constant_observable_has_zero_gradient():
    n = 2
    est = bismut_gradient(unit(n), unit(n), "const", 0.5, Dynamics(NoiseIntensity(n)), 0.05, 1.5, 20_000, 4)
    assert abs(est.mom) <= 3 * est.mom_stderr
    assert abs(est.mean) <= 3 * est.stderr or est.heavy_tail_warning


def linear_oracle(phi_coef, t, h, alpha, beta1, n_samples, seed):
    """d/dphi E clamp(u^1_t) for the linear scheme, by conditioning on the subordinator."""
    m = int(round(t / h))
    s = StableSubordinatorSampler(alpha, seed=seed)
    ds = s.sample(h, (n_samples, m))
    decay = np.exp(-h * (m - 1 - np.arange(m)))
    var = beta1**2 * np.sum(decay**2 * ds, axis=1)
    mean = math.exp(-t) * phi_coef
    sd = np.sqrt(var)
    p_inside = norm.cdf((1 - mean) / sd) - norm.cdf((-1 - mean) / sd)
    return math.exp(-t) * p_inside.mean(), math.exp(-t) * p_inside.std(ddof=1) / math.sqrt(n_samples)


def test_linear_bismut_oracle():
    n, t, h = 2, 0.5, 0.05
    q = NoiseIntensity(n)
    phi = 0.5 * unit(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = bismut_gradient(phi, unit(n), "cos1", t, Dynamics(q, "linear"), h, 1.5, 100_000, 5)
    target, target_se = linear_oracle(0.5, t, h, 1.5, q.beta[0], 200_000, 6)
    assert 0 < target < math.exp(-t)
    assert abs(est.mom - target) <= 3 * math.hypot(est.mom_stderr, target_se)


def test_bismut_against_fd_burgers():
    n = 4
    dyn = Dynamics(NoiseIntensity(n))
    phi = 0.3 * SQ * unit(n, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        b = bismut_gradient(phi, unit(n), "cos1", 0.5, dyn, 0.01, 1.5, 20_000, 7)
        f = fd_gradient(phi, unit(n), "cos1", 0.5, dyn, 0.01, 1.5, 20_000, 8)
    assert abs(b.mom - f.mom) <= 3 * math.hypot(b.mom_stderr, f.mom_stderr)


def test_requires_invertible_noise_and_bounded_observable():
    n = 2
    silent = NoiseIntensity(n, beta=np.zeros(n), check_bounds=False)
    with pytest.raises(ZeroDivisionError):
        bismut_gradient(unit(n), unit(n), "cos1", 0.1, Dynamics(silent), 0.05, 1.5, 100, 0)
    with pytest.raises(ValueError):
        bismut_gradient(unit(n), unit(n), "raw_cos1", 0.1, Dynamics(NoiseIntensity(n)), 0.05, 1.5, 100, 0)


def test_gradient_check_rows():
    rows = gradient_check(lambda n: Dynamics(NoiseIntensity(n), "truncated", 1.0), lambda n: 0.1 * unit(n, 1),
                          n_modes=(2,), times=(0.25,), n_samples=4000, seed=1)
    assert len(rows) == 1
    assert set(rows[0].row()) == {"n_modes", "t", "direction", "bismut", "bismut_se", "fd", "fd_se", "pass"}


def test_growth_linear_bound_and_zero_direction():
    c = linear_growth_constant(1.75, 1.0)
    x = np.linspace(1e-6, 10, 100_001)
    assert c == pytest.approx(np.max(x**0.375 * np.exp(-x)), rel=1e-6)
    rep = variational_growth_bound(lambda n: Dynamics(NoiseIntensity(n), "linear"), lambda n: np.zeros((2, n)),
                                   lambda n: np.random.default_rng(n).standard_normal((2, n)), n_modes=(2, 4, 8),
                                   n_paths=5, h=1e-3)
    assert max(rep.constants) <= c * (1 + 1e-12)
    zero = variational_growth_bound(lambda n: Dynamics(NoiseIntensity(n)), lambda n: np.zeros((2, n)),
                                    lambda n: np.zeros((2, n)), n_modes=(2,), n_paths=3, t_end=0.1)
    assert zero.constants == (0.0,)


def test_growth_uniform_in_modes():
    rep = variational_growth_bound(lambda n: Dynamics(NoiseIntensity(n), "truncated", 1.0),
                                   lambda n: 0.1 * SQ * unit(n, 1), lambda n: unit(n),
                                   n_modes=(4, 8, 16), n_paths=50, seed=2)
    assert rep.uniform, rep.medians
