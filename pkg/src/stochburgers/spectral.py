"""Real Fourier basis on the torus, fractional Sobolev norms and the noise intensity.

Fields are mean-zero real trigonometric polynomials

    u(x) = pi^{-1/2} * sum_{k=1}^{n} (a_k cos(kx) + b_k sin(kx))

stored as an array ``coeffs`` of shape ``(2, n)`` with row 0 holding the cosine
coefficients and row 1 the sine coefficients.  The basis is orthonormal in
L^2(0, 2pi), and A = -d^2/dx^2 acts on wavenumber k with eigenvalue k^2.

Every array-level helper (``*_coeffs``) works on arrays whose last two axes are
``(2, n)``, so ensembles of fields can be processed in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "SpectralField",
    "NoiseIntensity",
    "wavenumbers",
    "sobolev_norm",
    "sobolev_norm_coeffs",
    "inner",
    "inner_coeffs",
    "apply_fractional_power",
    "apply_semigroup",
    "semigroup_coeffs",
    "q_apply",
    "q_inverse",
    "project",
    "to_grid",
    "from_grid",
    "grid_points",
    "to_flat",
    "from_flat",
    "smoothing_constant",
    "k_gamma",
    "zeta_partial_sum",
]


def wavenumbers(n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=float)


@dataclass(frozen=True)
class SpectralField:
    """Immutable mean-zero field with ``coeffs[0] = cos``, ``coeffs[1] = sin``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != 2 or c.shape[1] < 1:
            raise ValueError(f"coeffs must have shape (2, n_max), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_pairs(cls, cos_coeffs, sin_coeffs) -> "SpectralField":
        return cls(np.vstack([np.asarray(cos_coeffs, float), np.asarray(sin_coeffs, float)]))

    @classmethod
    def zeros(cls, n_max: int) -> "SpectralField":
        return cls(np.zeros((2, n_max)))

    @classmethod
    def mode(cls, n_max: int, k: int, kind: str = "cos", value: float = 1.0) -> "SpectralField":
        """Field with a single basis coefficient (not the raw trig function)."""
        c = np.zeros((2, n_max))
        c[0 if kind == "cos" else 1, k - 1] = value
        return cls(c)

    @classmethod
    def from_function(cls, func, n_max: int, n_points: int | None = None) -> "SpectralField":
        """Project a periodic callable onto the first ``n_max`` wavenumbers."""
        m = n_points or max(4 * n_max + 1, 64)
        x = grid_points(m)
        return cls(from_grid(np.asarray(func(x), float), n_max))

    @classmethod
    def random(cls, n_max: int, rng: np.random.Generator, decay: float = 0.0) -> "SpectralField":
        k = wavenumbers(n_max)
        return cls(rng.standard_normal((2, n_max)) * k**-decay)

    @property
    def n_max(self) -> int:
        return self.coeffs.shape[1]

    @property
    def cos_coeffs(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def sin_coeffs(self) -> np.ndarray:
        return self.coeffs[1]

    def norm(self, gamma: float = 0.0) -> float:
        return sobolev_norm(self, gamma)

    def padded(self, n_max: int) -> "SpectralField":
        c = np.zeros((2, n_max))
        m = min(n_max, self.n_max)
        c[:, :m] = self.coeffs[:, :m]
        return SpectralField(c)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs)

    def __eq__(self, other) -> bool:
        return isinstance(other, SpectralField) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def to_csv_row(self) -> list[str]:
        """``n_max, a_1..a_N, b_1..b_N`` as round-trippable decimal text."""
        return [str(self.n_max)] + [repr(float(v)) for v in self.coeffs.ravel()]

    @classmethod
    def from_csv_row(cls, row) -> "SpectralField":
        n = int(row[0])
        vals = np.array([float(v) for v in row[1 : 1 + 2 * n]])
        if vals.size != 2 * n:
            raise ValueError(f"expected {2 * n} coefficients, got {vals.size}")
        return cls(vals.reshape(2, n))


@dataclass(frozen=True)
class NoiseIntensity:
    """Diagonal noise multiplier: wavenumber k is scaled by ``beta[k-1]``.

    ``beta`` defaults to ``k^{-theta}``.  The admissibility bounds
    ``delta k^{-theta} <= |beta_k| <= k^{-theta'} / delta`` are checked at
    construction when ``check_bounds`` is true.
    """

    n_max: int
    theta: float = 1.75
    theta_prime: float = 1.75
    delta: float = 1.0
    beta: np.ndarray | None = field(default=None)
    check_bounds: bool = True

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.theta < self.theta_prime or self.theta_prime < 0:
            raise ValueError("need theta >= theta_prime >= 0")
        k = wavenumbers(self.n_max)
        beta = k**-self.theta if self.beta is None else np.array(self.beta, dtype=float)
        if beta.shape != (self.n_max,):
            raise ValueError(f"beta must have shape ({self.n_max},)")
        if self.check_bounds:
            lo = self.delta * k**-self.theta
            hi = k**-self.theta_prime / self.delta
            # one ulp of slack so that beta = k^-theta passes at delta = 1
            if np.any(np.abs(beta) < lo * (1 - 1e-12)) or np.any(np.abs(beta) > hi * (1 + 1e-12)):
                raise ValueError("beta violates delta k^-theta <= |beta_k| <= k^-theta' / delta")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def scaled(cls, n_max: int, scale: float, theta: float = 1.75) -> "NoiseIntensity":
        """``beta_k = scale * k^{-theta}`` without the admissibility check (test hook)."""
        k = wavenumbers(n_max)
        return cls(n_max, theta, theta, 1.0, scale * k**-theta, check_bounds=False)

    @property
    def is_singular(self) -> bool:
        return bool(np.any(self.beta == 0))


def _c(u) -> np.ndarray:
    return u.coeffs if isinstance(u, SpectralField) else np.asarray(u, dtype=float)


def sobolev_norm_coeffs(c: np.ndarray, gamma: float = 0.0) -> np.ndarray:
    k = wavenumbers(c.shape[-1])
    return np.sqrt(np.sum(k ** (2 * gamma) * (c[..., 0, :] ** 2 + c[..., 1, :] ** 2), axis=-1))


def sobolev_norm(u: SpectralField, gamma: float = 0.0) -> float:
    """``||u||_gamma = (sum_k k^{2 gamma} (a_k^2 + b_k^2))^{1/2}``."""
    return float(sobolev_norm_coeffs(_c(u), gamma))


def inner_coeffs(c1: np.ndarray, c2: np.ndarray, gamma: float = 0.0) -> np.ndarray:
    k = wavenumbers(c1.shape[-1])
    return np.sum(k ** (2 * gamma) * (c1 * c2).sum(axis=-2), axis=-1)


def inner(u: SpectralField, v: SpectralField, gamma: float = 0.0) -> float:
    return float(inner_coeffs(_c(u), _c(v), gamma))


def apply_fractional_power(u: SpectralField, gamma: float) -> SpectralField:
    """A^{gamma/2}: wavenumber k scaled by k^gamma."""
    return SpectralField(_c(u) * wavenumbers(u.n_max) ** gamma)


def semigroup_coeffs(c: np.ndarray, t: float) -> np.ndarray:
    k = wavenumbers(c.shape[-1])
    return c * np.exp(-(k**2) * t)


def apply_semigroup(u: SpectralField, t: float) -> SpectralField:
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    return SpectralField(semigroup_coeffs(_c(u), t))


def q_apply(q: NoiseIntensity, u: SpectralField) -> SpectralField:
    return SpectralField(_c(u) * q.beta[: u.n_max])


def q_inverse(q: NoiseIntensity, u: SpectralField) -> SpectralField:
    beta = q.beta[: u.n_max]
    if np.any(beta == 0):
        raise ZeroDivisionError("noise intensity is singular (some beta_k == 0)")
    return SpectralField(_c(u) / beta)


def project(u: SpectralField, n: int) -> SpectralField:
    """Galerkin projection onto wavenumbers 1..n (shape is kept)."""
    c = _c(u).copy()
    c[:, n:] = 0.0
    return SpectralField(c)


def grid_points(m: int) -> np.ndarray:
    return 2 * np.pi * np.arange(m) / m


# below this many modes a dense synthesis matrix beats the FFT for batched fields
_DENSE_MAX_N = 32


@lru_cache(maxsize=64)
def _synthesis_matrix(n: int, m: int) -> np.ndarray:
    """(2n, m) values of the basis functions at the grid points."""
    kx = np.outer(np.arange(1, n + 1), grid_points(m))
    out = np.concatenate([np.cos(kx), np.sin(kx)]) / math.sqrt(math.pi)
    out.setflags(write=False)
    return out


def to_grid(u, m: int) -> np.ndarray:
    """Evaluate on ``m`` equispaced points of [0, 2pi); exact for m >= 2n+1."""
    c = _c(u)
    n = c.shape[-1]
    if m < 2 * n + 1:
        raise ValueError(f"need at least {2 * n + 1} grid points, got {m}")
    if n <= _DENSE_MAX_N:
        return c.reshape(c.shape[:-2] + (2 * n,)) @ _synthesis_matrix(n, m)
    spec = np.zeros(c.shape[:-2] + (m // 2 + 1,), dtype=complex)
    scale = m / (2 * math.sqrt(math.pi))
    spec.real[..., 1 : n + 1] = c[..., 0, :] * scale
    spec.imag[..., 1 : n + 1] = c[..., 1, :] * -scale
    return np.fft.irfft(spec, n=m, axis=-1)


def from_grid(values: np.ndarray, n: int) -> np.ndarray:
    """Basis coefficients of wavenumbers 1..n from grid samples (trapezoid rule)."""
    m = values.shape[-1]
    if m < 2 * n + 1:
        raise ValueError(f"need at least {2 * n + 1} grid points, got {m}")
    if n <= _DENSE_MAX_N:
        out = values @ (_synthesis_matrix(n, m).T * (2 * math.pi / m))
        return out.reshape(values.shape[:-1] + (2, n))
    f = np.fft.rfft(values, axis=-1)[..., 1 : n + 1]
    scale = 2 * math.pi / m / math.sqrt(math.pi)
    return np.stack([f.real * scale, -f.imag * scale], axis=-2)


def to_flat(u: SpectralField) -> dict[int, float]:
    """Map to the interleaved index: e_{2k} = cos(kx), e_{2k+1} = sin(kx) (normalized)."""
    c = _c(u)
    out = {}
    for k in range(1, c.shape[1] + 1):
        out[2 * k] = float(c[0, k - 1])
        out[2 * k + 1] = float(c[1, k - 1])
    return out


def from_flat(flat: dict[int, float], n_max: int) -> SpectralField:
    c = np.zeros((2, n_max))
    for idx, val in flat.items():
        k, r = divmod(idx, 2)
        if not 1 <= k <= n_max:
            raise ValueError(f"index {idx} outside wavenumbers 1..{n_max}")
        c[r, k - 1] = val
    return SpectralField(c)


def smoothing_constant(gamma: float) -> float:
    """sup_{x>0} x^gamma e^{-x} = gamma^gamma e^{-gamma}."""
    return 1.0 if gamma == 0 else gamma**gamma * math.exp(-gamma)


def k_gamma(q: NoiseIntensity, gamma: float) -> float:
    """sum over basis vectors of lambda^gamma beta^2 (cos and sin counted separately)."""
    k = wavenumbers(q.n_max)
    return float(2 * np.sum(k ** (2 * gamma) * q.beta**2))


def zeta_partial_sum(theta: float, n: int) -> tuple[float, float]:
    """Partial sum of sum_k lambda_k^{-theta} over the first n wavenumbers, and an integral
    tail estimate ``2 * int_n^inf x^{-2 theta} dx`` (infinite when 2 theta <= 1)."""
    k = wavenumbers(n)
    partial = float(2 * np.sum(k ** (-2 * theta)))
    tail = math.inf if 2 * theta <= 1 else 2 * n ** (1 - 2 * theta) / (2 * theta - 1)
    return partial, tail
