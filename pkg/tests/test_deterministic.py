import math

import numpy as np
import pytest

from stochburgers.colehopf import cole_hopf_solution
from stochburgers.deterministic import (
    EnergyBoundEstimator,
    calibrate_energy,
    contraction_sweep,
    energy_rhs,
    graded_grid,
    h1_persistence,
    integrate_shifted,
    lipschitz_in_data,
    local_time,
    m_norm,
    measure_contraction,
    picard_solve,
    random_ball_path,
    verify_picard,
)
from stochburgers.errors import HorizonTooLargeError
from stochburgers.spectral import sobolev_norm_coeffs, wavenumbers

SQ = math.sqrt(math.pi)


def sin_data(n, amp):
    c = np.zeros((2, n))
    c[1, 0] = amp * SQ
    return c


def test_graded_grid():
    t = graded_grid(1.0, 1e-2, 1e-6, 50)
    assert t[0] == 0 and t[1] == pytest.approx(1e-6) and t[-1] == pytest.approx(1.0)
    assert np.all(np.diff(t) > 0)
    assert np.diff(t).max() <= 1e-2 * (1 + 1e-9)


def test_zero_data():
    times = np.linspace(0, 1, 11)
    w = picard_solve(np.zeros((2, 8)), None, times)
    assert np.all(w.values == 0) and w.m_norm == 0


def test_cole_hopf_oracle_sin():
    n = 64
    phi = sin_data(n, 0.1)
    times = graded_grid(0.5, 1e-3, 1e-6, 300)
    w = picard_solve(phi, None, times, scheme="trapezoid").values
    ref = cole_hopf_solution(phi, times[-1:], n)[0]
    assert sobolev_norm_coeffs(w[-1] - ref) < 1e-6


def test_cole_hopf_identity_at_zero_time():
    rng = np.random.default_rng(1)
    phi = rng.standard_normal((2, 16)) * wavenumbers(16) ** -2.0
    np.testing.assert_allclose(cole_hopf_solution(phi, [0.0])[0], phi, atol=1e-10)


def test_linearisation_at_small_data():
    n = 16
    times = np.linspace(0, 1, 1001)
    w = picard_solve(sin_data(n, 0.1), None, times, scheme="trapezoid").values[-1]
    lin = sin_data(n, 0.1 * math.exp(-1.0))
    assert sobolev_norm_coeffs(w - lin) < 1e-2 * SQ
    assert sobolev_norm_coeffs(w - lin) > 0


def test_euler_fixed_point_is_the_time_stepper():
    rng = np.random.default_rng(2)
    times = np.linspace(0, 0.2, 201)
    phi = 0.3 * rng.standard_normal((2, 8)) * wavenumbers(8) ** -1.0
    z = 0.1 * rng.standard_normal((201, 2, 8)) * wavenumbers(8) ** -2.0
    w = picard_solve(phi, z, times).values
    np.testing.assert_allclose(w, integrate_shifted(phi, z, times), atol=1e-12)


def test_contraction():
    n = 16
    lt = local_time(0.5, n)
    assert lt.T <= lt.T1 and lt.T3 <= lt.T2
    times = graded_grid(lt.T, lt.T / 200, lt.T * 1e-5, 100)
    rng = np.random.default_rng(3)
    w = random_ball_path(times, n, 1.0, rng)
    assert m_norm(w, times) <= 1.0 + 1e-12
    phi = sin_data(n, 0.1)
    assert measure_contraction(phi, None, times, w, w) == 0.0
    for _ in range(5):
        v = random_ball_path(times, n, 1.0, rng)
        assert measure_contraction(phi, None, times, w, v) <= 0.55


def test_contraction_threshold_is_sharp():
    sweep = contraction_sweep(5.0, n=16, n_pairs=3, seed=1)
    assert sweep[0][1] <= 0.55
    assert max(r for _, r in sweep) > 0.5


def test_lipschitz_and_persistence():
    n = 16
    lt = local_time(0.5, n)
    times = graded_grid(lt.T, lt.T / 200, lt.T * 1e-5, 100)
    rng = np.random.default_rng(4)
    phi1 = rng.standard_normal((2, n)) * wavenumbers(n) ** -1.0
    phi1 *= 0.5 / sobolev_norm_coeffs(phi1, 1.0)
    assert lipschitz_in_data(phi1, phi1, None, times) == 0.0
    phi2 = phi1 + 0.05 * rng.standard_normal((2, n)) * wavenumbers(n) ** -1.0
    assert lipschitz_in_data(phi1, phi2, None, times) <= 2.1
    assert h1_persistence(np.zeros((2, n)), None, times) == 0.0
    sup1 = h1_persistence(phi1, None, times)
    assert sup1 <= 1.5
    # with no forcing and small data the H^1 norm is largest at the start
    assert sup1 == pytest.approx(sobolev_norm_coeffs(phi1, 1.0), rel=1e-12)


def test_horizon_too_large():
    times = np.linspace(0, 5, 501)
    with pytest.raises(HorizonTooLargeError) as info:
        picard_solve(sin_data(8, 8.0), None, times)
    assert info.value.factor > 0.5


def test_energy_without_forcing():
    times = np.linspace(0, 4, 401)
    rng = np.random.default_rng(5)
    phi = rng.standard_normal((2, 16))
    w = integrate_shifted(phi, None, times)
    lhs = sobolev_norm_coeffs(w) ** 2
    np.testing.assert_array_less(lhs, sobolev_norm_coeffs(phi) ** 2 * np.exp(-times) * (1 + 1e-12))
    rhs = energy_rhs(float(lhs[0]), np.zeros(len(times)), times, 3.0, 4.0)
    np.testing.assert_allclose(rhs, lhs[0] * np.exp(-times), rtol=1e-12)


def test_energy_estimator_api():
    est = EnergyBoundEstimator(margin=1.5)
    assert est.get_params() == {"margin": 1.5, "method": "envelope"}
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    y = np.array([2.0, 3.0, 4.0])
    est.fit(X, y)
    assert np.all(X @ est.coef_ >= y - 1e-9)
    assert est.c1_ == pytest.approx(1.5 * est.coef_[0])
    nn = EnergyBoundEstimator(method="nnls").fit(X, y)
    assert np.all(nn.coef_ >= 0)
    with pytest.raises(ValueError):
        EnergyBoundEstimator(method="bogus").fit(X, y)


def test_energy_calibration_small():
    est = calibrate_energy(n=16, seed=3, n_paths=5, horizon=1.0)
    assert est.c1_ >= 0 and est.c2_ >= 0


def test_verify_picard_small():
    rep = verify_picard(n=64, n_pairs=3, n_energy=5, energy_modes=16, energy_horizon=1.0, seed=2)
    checks = rep.checks()
    assert set(checks) == {"contraction", "lipschitz", "h1_persistence", "cole_hopf", "energy", "energy_free"}
    for name in ("contraction", "lipschitz", "h1_persistence", "cole_hopf", "energy_free"):
        assert checks[name], (name, rep.worst(name))
