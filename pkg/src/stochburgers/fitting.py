"""Small statistical helpers: upper-envelope fits and two-sample KS distances."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog
from scipy.stats import ks_2samp, linregress
from scipy.stats import t as student_t

__all__ = ["envelope_fit", "ks_distance", "ks_critical", "exponential_rate"]


def envelope_fit(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Nonnegative c minimising sum(X c) subject to X c >= y (a tight linear upper envelope)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    res = linprog(Xs.sum(axis=0), A_ub=-Xs, b_ub=-y, bounds=[(0, None)] * X.shape[1], method="highs")
    if not res.success:
        raise RuntimeError(f"envelope fit failed: {res.message}")
    return res.x / scale


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = a[np.isfinite(a)], b[np.isfinite(b)]
    return float(ks_2samp(a, b).statistic)


def ks_critical(n: int, m: int, level: float = 0.01) -> float:
    """Asymptotic two-sample KS critical value c(level) sqrt((n + m) / (n m))."""
    c = math.sqrt(-0.5 * math.log(level / 2))
    return c * math.sqrt((n + m) / (n * m))


def exponential_rate(t: np.ndarray, d: np.ndarray, level: float = 0.95) -> tuple[float, float, float, int]:
    """Fit d ~ A exp(-g t) by least squares on log d; returns (g, g_lo, g_hi, n_points)."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    keep = d > 0
    t, d = t[keep], d[keep]
    if t.size < 3:
        return math.nan, math.nan, math.nan, int(t.size)
    fit = linregress(t, np.log(d))
    q = student_t.ppf(0.5 + level / 2, t.size - 2)
    g = -fit.slope
    return float(g), float(g - q * fit.stderr), float(g + q * fit.stderr), int(t.size)
