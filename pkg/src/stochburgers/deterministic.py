"""Picard iteration for the shifted Burgers equation

    w_t = e^{-tA} phi - int_0^t e^{-(t-s)A} B(w_s + Z_s) ds

in the weighted norm ``||w||_{M_T} = sup_t max(||w_t||_0, t^{1/2} ||w_t||_1)``,
with the local existence time, contraction, Lipschitz and energy checks.

Paths are arrays of shape (..., M+1, 2, n) on a time grid ``times`` starting at 0.
Two quadratures of the mild integral are available:

``"euler"``
    left-point exponential Euler, I_{j+1} = e^{-hA}(I_j + h B_j).  Its fixed
    point coincides with the stochastic time stepper (``u - Z``).
``"trapezoid"``
    B linearly interpolated between grid points and integrated exactly against
    the semigroup kernel (second order).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import BlowUpError, HorizonTooLargeError
from .fitting import envelope_fit
from .nonlinearity import burgers_coeffs, fit_trilinear_constant, inner_coeffs
from .spectral import SpectralField, sobolev_norm_coeffs, wavenumbers

__all__ = [
    "MTNormedPath",
    "LocalTime",
    "m_norm",
    "graded_grid",
    "local_time",
    "picard_map",
    "picard_solve",
    "integrate_shifted",
    "measure_contraction",
    "lipschitz_in_data",
    "h1_persistence",
    "energy_rhs",
    "energy_residuals",
    "EnergyBoundEstimator",
    "random_ball_path",
    "PicardReport",
    "verify_picard",
    "calibrate_energy",
    "contraction_sweep",
]

SIGMA = 0.75


def graded_grid(horizon: float, h: float, t_first: float = 1e-6, n_graded: int = 300) -> np.ndarray:
    """Geometric steps from ``t_first`` up to ``20 h``, then uniform steps ``h``.

    Resolves the initial layer of rough data, where t^{1/2}||w_t||_1 peaks.
    ``n_graded`` is raised when needed so that no step exceeds ``h``."""
    edge = min(20 * h, horizon)
    if edge > h:
        n_graded = max(n_graded, math.ceil(math.log(edge / t_first) / -math.log1p(-h / edge)) + 1)
    head = np.geomspace(t_first, edge, n_graded)
    n_tail = int(round((horizon - edge) / h))
    tail = edge + (horizon - edge) * np.arange(1, n_tail + 1) / max(n_tail, 1) if n_tail else np.empty(0)
    return np.concatenate([[0.0], head, tail])


def m_norm(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    n0 = sobolev_norm_coeffs(values, 0.0)
    n1 = sobolev_norm_coeffs(values, 1.0) * np.sqrt(times)
    return np.max(np.maximum(n0, n1), axis=-1)


@dataclass
class MTNormedPath:
    times: np.ndarray
    values: np.ndarray
    iterations: int = 0
    contraction_factors: list = field(default_factory=list)

    @property
    def m_norm(self) -> float:
        return float(m_norm(self.values, self.times))

    def at(self, i: int) -> SpectralField:
        return SpectralField(self.values[i])

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class LocalTime:
    """Local existence time T(R) built from the trilinear constant ``c_sigma``."""

    R: float
    c_sigma: float
    sigma: float = SIGMA

    @property
    def T1(self) -> float:
        return min((self.c_sigma * self.R) ** (-2 / (1 - self.sigma)), 1.0)

    @property
    def T2(self) -> float:
        return min(1 / (2 * self.c_sigma * self.R), self.T1)

    @property
    def T3(self) -> float:
        """Threshold for the H^1 persistence bound."""
        return min((2 * self.c_sigma * self.R) ** (-2 / (1 - self.sigma)), self.T2)

    @property
    def T(self) -> float:
        return self.T2


def local_time(R: float, n: int = 64, sigma: float = SIGMA, c_sigma: float | None = None) -> LocalTime:
    if c_sigma is None:
        c_sigma = fit_trilinear_constant(n, sigma)
    return LocalTime(R, c_sigma, sigma)


def _phi_weights(x: np.ndarray):
    """Weights of B_j and B_{j+1}: int_0^1 e^{-xs} s ds and int_0^1 e^{-xs} (1-s) ds."""
    x = np.asarray(x, dtype=float)
    small = x < 0.05
    xs = np.where(small, 1.0, x)
    phi1 = -np.expm1(-xs) / xs
    w_right = (xs + np.expm1(-xs)) / xs**2
    # series for small x avoids the cancellation in x - 1 + e^{-x}
    s_phi1 = sum((-x) ** m / math.factorial(m + 1) for m in range(8))
    s_right = sum((-x) ** m / math.factorial(m + 2) for m in range(8))
    phi1 = np.where(small, s_phi1, phi1)
    w_right = np.where(small, s_right, w_right)
    return phi1 - w_right, w_right


def picard_map(w: np.ndarray, phi: np.ndarray, z: np.ndarray | None, times: np.ndarray,
               scheme: str = "euler") -> np.ndarray:
    """One application of the mild-form map M(w)."""
    n = w.shape[-1]
    k2 = wavenumbers(n) ** 2
    drive = w if z is None else w + z
    b = burgers_coeffs(drive)
    out = np.empty_like(w)
    out[..., 0, :, :] = phi
    lin = phi
    integral = np.zeros(w.shape[:-3] + (2, n))
    steps = np.diff(times)
    decay = np.exp(-k2 * steps[:, None])
    if scheme == "trapezoid":
        wl, wr = _phi_weights(k2 * steps[:, None])
        wl, wr = steps[:, None] * wl, steps[:, None] * wr
    elif scheme != "euler":
        raise ValueError(f"unknown quadrature scheme {scheme!r}")
    for j, h in enumerate(steps):
        lin = decay[j] * lin
        if scheme == "euler":
            integral = decay[j] * (integral + h * b[..., j, :, :])
        else:
            integral = decay[j] * integral + wl[j] * b[..., j, :, :] + wr[j] * b[..., j + 1, :, :]
        out[..., j + 1, :, :] = lin - integral
    return out


def picard_solve(phi, z=None, times=None, tol: float = 1e-12, max_iter: int = 200,
                 scheme: str = "euler", check_contraction: bool = True) -> MTNormedPath:
    """Fixed point of :func:`picard_map` by Picard iteration from w^(0) = e^{-tA} phi.

    Raises HorizonTooLargeError when a successive distance fails to halve while
    still well above ``tol``, and BlowUpError on non-finite iterates.
    """
    phi = phi.coeffs if isinstance(phi, SpectralField) else np.asarray(phi, float)
    times = np.asarray(times, dtype=float)
    n = phi.shape[-1]
    k2 = wavenumbers(n) ** 2
    w = np.exp(-k2 * times[:, None, None]) * phi
    factors = []
    prev = None
    for it in range(1, max_iter + 1):
        new = picard_map(w, phi, z, times, scheme)
        if not np.all(np.isfinite(new)):
            raise BlowUpError("Picard iterate is not finite", time=None, last_state=w)
        dist = float(m_norm(new - w, times))
        w = new
        if prev is not None and prev > 0:
            factors.append(dist / prev)
            if check_contraction and dist > 0.5 * prev and dist > 1e3 * tol:
                raise HorizonTooLargeError(
                    f"Picard iterates do not contract (factor {dist / prev:.3f}); shorten the horizon",
                    dist / prev,
                )
        if dist < tol:
            return MTNormedPath(times, w, it, factors)
        prev = dist
    raise HorizonTooLargeError(f"no convergence in {max_iter} Picard iterations", factors[-1] if factors else math.nan)


def integrate_shifted(phi, z: np.ndarray | None, times: np.ndarray) -> np.ndarray:
    """Forward sweep of the exponential Euler scheme; equals the Euler Picard fixed point."""
    phi = phi.coeffs if isinstance(phi, SpectralField) else np.asarray(phi, float)
    n = phi.shape[-1]
    k2 = wavenumbers(n) ** 2
    out = np.empty(phi.shape[:-2] + (len(times), 2, n))
    w = phi
    out[..., 0, :, :] = w
    for j in range(len(times) - 1):
        h = times[j + 1] - times[j]
        drive = w if z is None else w + z[..., j, :, :]
        w = np.exp(-k2 * h) * (w - h * burgers_coeffs(drive))
        if not np.all(np.isfinite(w)):
            raise BlowUpError("shifted Burgers integration overflowed", time=times[j + 1],
                              last_state=out[..., j, :, :])
        out[..., j + 1, :, :] = w
    return out


def measure_contraction(phi, z, times, w: np.ndarray, v: np.ndarray, scheme: str = "euler") -> float:
    """||M(w) - M(v)||_{M_T} / ||w - v||_{M_T}; 0 for identical inputs."""
    phi = phi.coeffs if isinstance(phi, SpectralField) else np.asarray(phi, float)
    den = float(m_norm(w - v, times))
    if den == 0:
        return 0.0
    num = float(m_norm(picard_map(w, phi, z, times, scheme) - picard_map(v, phi, z, times, scheme), times))
    return num / den


def lipschitz_in_data(phi1, phi2, z, times, scheme: str = "euler") -> float:
    c1 = phi1.coeffs if isinstance(phi1, SpectralField) else np.asarray(phi1, float)
    c2 = phi2.coeffs if isinstance(phi2, SpectralField) else np.asarray(phi2, float)
    den = float(sobolev_norm_coeffs(c1 - c2))
    if den == 0:
        return 0.0
    w1 = picard_solve(c1, z, times, scheme=scheme).values
    w2 = picard_solve(c2, z, times, scheme=scheme).values
    return float(m_norm(w1 - w2, times)) / den


def h1_persistence(phi, z, times, scheme: str = "euler") -> float:
    """sup_t ||w_t||_1 along the Picard solution."""
    w = picard_solve(phi, z, times, scheme=scheme).values
    return float(np.max(sobolev_norm_coeffs(w, 1.0)))


def random_ball_path(times: np.ndarray, n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Random element of the M_T ball of the given radius (smooth in time)."""
    k2 = wavenumbers(n) ** 2
    psi = rng.standard_normal((2, n)) * wavenumbers(n) ** -rng.uniform(0.0, 1.5)
    chi = rng.standard_normal((2, n)) * wavenumbers(n) ** -rng.uniform(1.0, 2.5)
    omega = rng.uniform(0.5, 6.0)
    t = times[:, None, None]
    path = np.exp(-k2 * t) * psi + np.sin(omega * t) * chi
    return path * (radius * rng.uniform(0.5, 1.0) / m_norm(path, times))


def energy_rhs(phi_norm2: float, z_h1: np.ndarray, times: np.ndarray, c1: float, c2: float) -> np.ndarray:
    """Right side of the energy inequality on the grid, Z piecewise constant (left values).

    ||phi||^2 exp(int_0^t g) + c2 int_0^t exp(int_s^t g) ||Z_s||_1^4 ds,  g = c1 ||Z||_1^2 - 1.
    """
    out = np.empty(len(times))
    out[0] = phi_norm2
    acc = phi_norm2
    for j in range(len(times) - 1):
        h = times[j + 1] - times[j]
        g = c1 * z_h1[j] ** 2 - 1.0
        growth = math.exp(g * h)
        src = c2 * z_h1[j] ** 4 * (h if abs(g * h) < 1e-12 else math.expm1(g * h) / g)
        acc = growth * acc + src
        out[j + 1] = acc
    return out


def energy_residuals(w: np.ndarray, z: np.ndarray):
    """Samples for fitting (C1, C2): features (||w||_0^2 ||Z||_1^2, ||Z||_1^4) and
    target 2|<B(w+Z), w>| - ||w||_1^2."""
    pairing = inner_coeffs(burgers_coeffs(w + z), w)
    z1 = sobolev_norm_coeffs(z, 1.0)
    x = np.stack([sobolev_norm_coeffs(w, 0.0) ** 2 * z1**2, z1**4], axis=-1)
    y = 2 * np.abs(pairing) - sobolev_norm_coeffs(w, 1.0) ** 2
    return x.reshape(-1, 2), y.reshape(-1)


class EnergyBoundEstimator(BaseEstimator):
    """Fit the constants (C1, C2) of the energy inequality.

    The target is the residual ``2|<B(w+Z),w>| - ||w||_1^2`` and the features are
    ``(||w||_0^2 ||Z||_1^2, ||Z||_1^4)``, restricted to samples where the residual
    is positive.  ``method="envelope"`` takes the tightest nonnegative constants
    dominating every calibration sample; ``method="nnls"`` uses nonnegative
    least squares.  Either is multiplied by ``margin``.  ``predict`` evaluates
    the right side of the inequality for a trajectory.
    """

    def __init__(self, margin: float = 2.0, method: str = "envelope"):
        self.margin = margin
        self.method = method

    def fit(self, X, y):
        X = check_array(X, ensure_min_samples=2)
        y = np.asarray(y, dtype=float)
        active = y > 0
        if active.sum() < 2:
            self.coef_ = np.zeros(2)
        elif self.method == "envelope":
            self.coef_ = envelope_fit(X[active], y[active])
        elif self.method == "nnls":
            scale = X[active].max(axis=0)
            scale[scale == 0] = 1.0
            coef, _ = nnls(X[active] / scale, y[active])
            self.coef_ = coef / scale
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.c1_, self.c2_ = (float(v) for v in self.margin * self.coef_)
        return self

    def predict(self, phi_norm2: float, z_h1: np.ndarray, times: np.ndarray) -> np.ndarray:
        check_is_fitted(self, "coef_")
        return energy_rhs(phi_norm2, z_h1, times, self.c1_, self.c2_)

    def score_path(self, w: np.ndarray, z_h1: np.ndarray, times: np.ndarray) -> float:
        """max_t ||w_t||_0^2 / RHS(t); the inequality holds iff this is <= 1."""
        lhs = sobolev_norm_coeffs(w, 0.0) ** 2
        rhs = self.predict(float(lhs[0]), z_h1, times)
        return float(np.max(lhs / np.maximum(rhs, np.finfo(float).tiny)))


def _frozen_convolution(times: np.ndarray, n: int, alpha: float, rng: np.random.Generator,
                        cap: float | None = None, gaussian: bool = False) -> np.ndarray:
    """One stochastic convolution path on ``times``; rescaled so sup ||Z||_1 <= cap when given.

    ``gaussian`` freezes the subordinator clock (S_t = t), giving Brownian forcing.
    """
    from .noise import convolution_path, generate_path
    from .spectral import NoiseIntensity
    from .subordinator import StableSubordinatorSampler

    path = generate_path(StableSubordinatorSampler(alpha, rng=rng, frozen=gaussian), n, times)
    z = convolution_path(path, NoiseIntensity(n))
    if cap is not None:
        sup = float(np.max(sobolev_norm_coeffs(z, 1.0)))
        if sup > 0:
            z = z * (cap * rng.uniform(0.2, 1.0) / sup)
    return z


def _ball_field(n: int, radius: float, rng: np.random.Generator, gamma: float = 0.0) -> np.ndarray:
    c = rng.standard_normal((2, n)) * wavenumbers(n) ** -rng.uniform(0.5, 2.0)
    return c * (radius * rng.uniform(0.1, 1.0) / sobolev_norm_coeffs(c, gamma))


def _energy_path(times: np.ndarray, n: int, alpha: float, rng: np.random.Generator, radius: float = 10.0):
    z = _frozen_convolution(times, n, alpha, rng, gaussian=True)
    phi = _ball_field(n, radius, rng)
    return phi, z, integrate_shifted(phi, z, times)


def calibrate_energy(n: int = 32, alpha: float = 1.5, seed: int = 0, n_paths: int = 100, horizon: float = 4.0,
                     h: float = 1e-2) -> EnergyBoundEstimator:
    """Fit the energy-inequality constants on ``n_paths`` Gaussian-forced trajectories."""
    from .rng import make_rng

    times = np.linspace(0.0, horizon, int(round(horizon / h)) + 1)
    feats, targets = [], []
    for j in range(n_paths):
        _, z, w = _energy_path(times, n, alpha, make_rng(seed, j))
        x, y = energy_residuals(w, z)
        feats.append(x)
        targets.append(y)
    return EnergyBoundEstimator().fit(np.concatenate(feats), np.concatenate(targets))


@dataclass
class PicardReport:
    """Rows (check, index, value, bound, pass) from :func:`verify_picard`."""

    records: list
    local: LocalTime
    energy_constants: tuple = (math.nan, math.nan)

    def rows(self):
        for r in self.records:
            yield dict(r)

    def checks(self) -> dict:
        out: dict = {}
        for r in self.records:
            out.setdefault(r["check"], []).append(bool(r["pass"]))
        return {k: all(v) for k, v in out.items()}

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def worst(self, check: str) -> float:
        return max(r["value"] for r in self.records if r["check"] == check)


def verify_picard(n: int = 64, radius: float = 0.5, n_pairs: int = 100, alpha: float = 1.5, seed: int = 0,
                  n_energy: int = 100, energy_modes: int = 32, energy_horizon: float = 4.0,
                  energy_h: float = 1e-2, cole_hopf_h: float = 1e-3) -> PicardReport:
    """Contraction, Lipschitz, H^1 persistence, Cole-Hopf and energy checks.

    Noise paths Z for the local checks are stochastic convolutions rescaled
    into the ball sup ||Z||_1 <= R; the energy check uses Gaussian-forced
    convolutions over a long horizon.  Every path has its own derived stream.
    """
    from .colehopf import cole_hopf_solution
    from .rng import derive_seed, make_rng

    lt = local_time(radius, n)
    T = lt.T
    times = graded_grid(T, T / 200, T * 1e-5, 100)
    records = []
    for i in range(n_pairs):
        rng = make_rng(seed, i)
        z = _frozen_convolution(times, n, alpha, rng, cap=radius)
        phi1 = _ball_field(n, radius, rng)
        phi2 = _ball_field(n, radius, rng)
        w = random_ball_path(times, n, 2 * radius, rng)
        v = random_ball_path(times, n, 2 * radius, rng)
        ratio = measure_contraction(phi1, z, times, w, v)
        records.append({"check": "contraction", "index": i, "value": ratio, "bound": 0.55, "pass": ratio <= 0.55})
        lip = lipschitz_in_data(phi1, phi2, z, times)
        records.append({"check": "lipschitz", "index": i, "value": lip, "bound": 2.1, "pass": lip <= 2.1})
        phi_h1 = _ball_field(n, radius, rng, gamma=1.0)
        phi_h1 *= radius / sobolev_norm_coeffs(phi_h1, 1.0)
        sup1 = h1_persistence(phi_h1, z, times)
        records.append({"check": "h1_persistence", "index": i, "value": sup1, "bound": 3 * radius,
                        "pass": sup1 <= 3 * radius})

    # Cole-Hopf oracle (no noise), including a rough datum
    ch_times = graded_grid(1.0, cole_hopf_h, 1e-6, 300)
    rng = make_rng(seed, n_pairs)
    k = wavenumbers(n)
    data = [0.1 * math.sqrt(math.pi) * np.eye(1, n).repeat(2, 0) * [[0], [1]],
            np.eye(1, n).repeat(2, 0) * [[0], [1]]]
    for decay in (1.0, 2.0):
        c = rng.standard_normal((2, n)) * k**-decay
        data.append(c / sobolev_norm_coeffs(c))
    for i, phi in enumerate(data):
        w = picard_solve(phi, None, ch_times, scheme="trapezoid").values
        ref = cole_hopf_solution(phi, ch_times, n)
        err = float(np.max(sobolev_norm_coeffs(w - ref)))
        records.append({"check": "cole_hopf", "index": i, "value": err, "bound": 1e-6, "pass": err < 1e-6})

    # energy inequality: fit on calibration paths, validate on fresh ones
    e_times = np.linspace(0.0, energy_horizon, int(round(energy_horizon / energy_h)) + 1)
    est = calibrate_energy(energy_modes, alpha, derive_seed(seed, 1), n_energy, energy_horizon, energy_h)
    for j in range(n_energy):
        phi, z, w = _energy_path(e_times, energy_modes, alpha, make_rng(derive_seed(seed, 2), j))
        score = est.score_path(w, sobolev_norm_coeffs(z, 1.0), e_times)
        records.append({"check": "energy", "index": j, "value": score, "bound": 1.0, "pass": score <= 1.0})
    for j in range(10):
        r = make_rng(derive_seed(seed, 3), j)
        phi = _ball_field(energy_modes, 10.0, r)
        w = integrate_shifted(phi, None, e_times)
        lhs = sobolev_norm_coeffs(w, 0.0) ** 2
        rhs = sobolev_norm_coeffs(phi, 0.0) ** 2 * np.exp(-e_times)
        ratio = float(np.max(lhs / rhs))
        records.append({"check": "energy_free", "index": j, "value": ratio, "bound": 1.0, "pass": ratio <= 1.0})
    return PicardReport(records, lt, (est.c1_, est.c2_))


def contraction_sweep(radius: float, n: int = 32, growth: float = 2.0, t_max: float = 4.0, n_pairs: int = 10,
                      seed: int = 0) -> list[tuple[float, float]]:
    """(T, max contraction ratio) for T = T(R), growth T(R), ... up to ``t_max`` with Z = 0."""
    from .rng import make_rng

    rng = make_rng(seed, 0)
    T = local_time(radius, n).T
    out = []
    while T <= t_max:
        times = graded_grid(T, T / 200, T * 1e-5, 100)
        worst = 0.0
        for _ in range(n_pairs):
            phi = rng.standard_normal((2, n)) * wavenumbers(n) ** -1.0
            phi *= radius / sobolev_norm_coeffs(phi)
            w = random_ball_path(times, n, 2 * radius, rng)
            v = random_ball_path(times, n, 2 * radius, rng)
            worst = max(worst, measure_contraction(phi, None, times, w, v))
        out.append((T, worst))
        T *= growth
    return out
