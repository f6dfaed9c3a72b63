"""Closed-form deterministic Burgers solution on the torus via the Cole-Hopf map.

For u_t = u_xx - u u_x, ``u = -2 (log psi)_x`` with psi solving the heat
equation from ``psi_0 = exp(-(1/2) int_0^x u_0)``.  Everything here is done on a
fine physical grid with plain FFTs, independently of the Galerkin solver.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = ["cole_hopf_solution"]


def cole_hopf_solution(phi_coeffs: np.ndarray, times, n_out: int | None = None,
                       n_grid: int = 2048) -> np.ndarray:
    """Basis coefficients of the exact solution at ``times``; shape (len(times), 2, n_out)."""
    phi_coeffs = np.asarray(phi_coeffs, dtype=float)
    n = phi_coeffs.shape[-1]
    n_out = n if n_out is None else n_out
    x = 2 * math.pi * np.arange(n_grid) / n_grid
    k = np.arange(1, n + 1)
    a, b = phi_coeffs
    # mean-zero antiderivative of pi^{-1/2}(a cos kx + b sin kx)
    prim = (np.sin(np.outer(x, k)) @ (a / k) - np.cos(np.outer(x, k)) @ (b / k)) / math.sqrt(math.pi)
    psi0_hat = np.fft.fft(np.exp(-0.5 * prim))
    freq = np.fft.fftfreq(n_grid, d=1.0 / n_grid)
    out = []
    for t in np.atleast_1d(times):
        psi_hat = psi0_hat * np.exp(-(freq**2) * t)
        psi = np.fft.ifft(psi_hat).real
        psi_x = np.fft.ifft(1j * freq * psi_hat).real
        u = -2.0 * psi_x / psi
        f = np.fft.rfft(u)[1 : n_out + 1]
        scale = 2 * math.pi / n_grid / math.sqrt(math.pi)
        out.append(np.stack([f.real * scale, -f.imag * scale]))
    return np.array(out)
