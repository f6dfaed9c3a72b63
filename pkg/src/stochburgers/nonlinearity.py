"""Burgers bilinear term B(u, v) = u v', the smooth cutoff and the truncated drift B_R."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.fft import next_fast_len

from .spectral import (
    _DENSE_MAX_N,
    SpectralField,
    from_grid,
    inner_coeffs,
    sobolev_norm_coeffs,
    to_grid,
    wavenumbers,
)

__all__ = [
    "cutoff",
    "cutoff_derivative",
    "padded_size",
    "bilinear",
    "bilinear_coeffs",
    "burgers_coeffs",
    "burgers_derivative_coeffs",
    "trilinear_pairing",
    "truncated_nonlinearity",
    "truncated_coeffs",
    "cutoff_factor",
    "dual_norm_coeffs",
    "fit_trilinear_constant",
]


def _g(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def cutoff(r):
    """C-infinity step: 1 on |r| <= 1, 0 on |r| >= 2, g(2-r)/(g(2-r)+g(r-1)) between."""
    r = np.abs(np.asarray(r, dtype=float))
    a, b = _g(2.0 - r), _g(r - 1.0)
    out = np.where(r <= 1.0, 1.0, 0.0)
    mid = (r > 1.0) & (r < 2.0)
    out = np.where(mid, a / np.where(mid, a + b, 1.0), out)
    return out if out.ndim else float(out)


def cutoff_derivative(r):
    """d/dr of :func:`cutoff` for r >= 0."""
    r = np.abs(np.asarray(r, dtype=float))
    mid = (r > 1.0) & (r < 2.0)
    s1 = np.where(mid, 2.0 - r, 1.0)
    s2 = np.where(mid, r - 1.0, 1.0)
    a, b = np.exp(-1.0 / s1), np.exp(-1.0 / s2)
    # d/dr g(2-r) = -g(2-r)/s1^2 ; d/dr g(r-1) = g(r-1)/s2^2
    da, db = -a / s1**2, b / s2**2
    d = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    out = np.where(mid, d, 0.0)
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def padded_size(n: int) -> int:
    """Grid size keeping products of two degree-n polynomials alias-free on modes <= n."""
    return next_fast_len(3 * n + 1)


def bilinear_coeffs(cu: np.ndarray, cv: np.ndarray) -> np.ndarray:
    """Coefficients of Pi_n(u v') for batched coefficient arrays of shape (..., 2, n)."""
    n = cu.shape[-1]
    m = padded_size(n)
    k = wavenumbers(n)
    # derivative: a cos + b sin -> k b cos - k a sin
    dv = np.stack([k * cv[..., 1, :], -k * cv[..., 0, :]], axis=-2)
    return from_grid(to_grid(cu, m) * to_grid(dv, m), n)


@lru_cache(maxsize=32)
def _value_and_slope_matrix(n: int) -> np.ndarray:
    """(2n, 2m) matrix mapping flat coefficients to grid values of u and u'."""
    m = padded_size(n)
    kx = np.outer(np.arange(1, n + 1), 2 * np.pi * np.arange(m) / m)
    k = np.arange(1, n + 1)[:, None]
    vals = np.concatenate([np.cos(kx), np.sin(kx)])
    slopes = np.concatenate([-k * np.sin(kx), k * np.cos(kx)])
    out = np.concatenate([vals, slopes], axis=1) / math.sqrt(math.pi)
    out.setflags(write=False)
    return out


def burgers_coeffs(c: np.ndarray) -> np.ndarray:
    """B(u) = u u' for batched coefficients."""
    n = c.shape[-1]
    m = padded_size(n)
    if n <= _DENSE_MAX_N:
        both = c.reshape(c.shape[:-2] + (2 * n,)) @ _value_and_slope_matrix(n)
        return from_grid(both[..., :m] * both[..., m:], n)
    k = wavenumbers(n)
    dc = np.stack([k * c[..., 1, :], -k * c[..., 0, :]], axis=-2)
    both = to_grid(np.stack([c, dc], axis=0), m)
    return from_grid(both[0] * both[1], n)


def burgers_derivative_coeffs(c: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Directional derivative of B at u along J: B(J, u) + B(u, J) = (uJ)'."""
    n = c.shape[-1]
    m = padded_size(n)
    if n <= _DENSE_MAX_N:
        mat = _value_and_slope_matrix(n)
        gu = c.reshape(c.shape[:-2] + (2 * n,)) @ mat
        gj = j.reshape(j.shape[:-2] + (2 * n,)) @ mat
        return from_grid(gu[..., :m] * gj[..., m:] + gj[..., :m] * gu[..., m:], n)
    return bilinear_coeffs(c, j) + bilinear_coeffs(j, c)


def bilinear(u: SpectralField, v: SpectralField) -> SpectralField:
    if u.n_max != v.n_max:
        raise ValueError("fields must share n_max")
    return SpectralField(bilinear_coeffs(u.coeffs, v.coeffs))


def trilinear_pairing(u: SpectralField, v: SpectralField, w: SpectralField) -> float:
    """<B(u, v), w>_0."""
    return float(inner_coeffs(bilinear_coeffs(u.coeffs, v.coeffs), w.coeffs))


def cutoff_factor(c: np.ndarray, radius: float) -> np.ndarray:
    return cutoff(sobolev_norm_coeffs(c, 1.0) / (5.0 * radius))


def truncated_coeffs(c: np.ndarray, radius: float) -> np.ndarray:
    chi = np.asarray(cutoff_factor(c, radius))
    return burgers_coeffs(c) * chi[..., None, None]


def truncated_nonlinearity(u: SpectralField, radius: float) -> SpectralField:
    """B_R(u) = B(u) chi(||u||_1 / (5R))."""
    if radius <= 0:
        raise ValueError("truncation radius must be positive")
    return SpectralField(truncated_coeffs(u.coeffs, radius))


def dual_norm_coeffs(c: np.ndarray, sigma: float) -> np.ndarray:
    """||f||_{-sigma}."""
    return sobolev_norm_coeffs(c, -sigma)


def fit_trilinear_constant(
    n: int,
    sigma: float = 0.75,
    n_samples: int = 2000,
    rng: np.random.Generator | None = None,
    exponents: tuple[float, float, float] | None = None,
    refine_steps: int = 30,
) -> float:
    """Empirical constant C in <B(u,v),w> <= C ||u||_{s1} ||v||_{s2+1} ||w||_{s3}.

    Default exponents are (0, 0, sigma), i.e. ||B(u, v)||_{-sigma} <= C ||u||_0 ||v||_1.
    Random draws are followed by alternating maximisation over u, v and w (each
    step is exact because the pairing is linear in each argument), so the value
    approaches the true supremum over the n-mode space from below.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    s1, s2, s3 = (0.0, 0.0, sigma) if exponents is None else exponents
    k = wavenumbers(n)
    best = 0.0
    batch = 256
    cu = cv = cw = None
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        decay = rng.uniform(0.0, 2.0, size=(3, b, 1, 1))
        cu = rng.standard_normal((b, 2, n)) * k**-decay[0]
        cv = rng.standard_normal((b, 2, n)) * k**-decay[1]
        cw = rng.standard_normal((b, 2, n)) * k**-decay[2]
        val = inner_coeffs(bilinear_coeffs(cu, cv), cw)
        den = (
            sobolev_norm_coeffs(cu, s1)
            * sobolev_norm_coeffs(cv, s2 + 1)
            * sobolev_norm_coeffs(cw, s3)
        )
        ratio = np.abs(val) / den
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best = float(ratio[i])
            start = (cu[i], cv[i], cw[i])
        done += b
    u, v, w = start
    wk1, wk2, wk3 = k ** (2 * s1), k ** (2 * (s2 + 1)), k ** (2 * s3)
    for _ in range(refine_steps):
        # maximise over w: Riesz representer of B(u, v) in H^{s3}
        w = bilinear_coeffs(u, v) / wk3
        # over v: <B(u,v),w> is linear in v; assemble its gradient by polarisation
        v = _linear_gradient(lambda x: inner_coeffs(bilinear_coeffs(u, x), w), n) / wk2
        u = _linear_gradient(lambda x: inner_coeffs(bilinear_coeffs(x, v), w), n) / wk1
        val = abs(float(inner_coeffs(bilinear_coeffs(u, v), w)))
        den = float(
            sobolev_norm_coeffs(u, s1) * sobolev_norm_coeffs(v, s2 + 1) * sobolev_norm_coeffs(w, s3)
        )
        if den == 0:
            break
        best = max(best, val / den)
        u, v, w = u / sobolev_norm_coeffs(u, s1), v / sobolev_norm_coeffs(v, s2 + 1), w / sobolev_norm_coeffs(w, s3)
    return best


def _linear_gradient(fn, n: int) -> np.ndarray:
    basis = np.eye(2 * n).reshape(2 * n, 2, n)
    return np.asarray(fn(basis)).reshape(2, n)
