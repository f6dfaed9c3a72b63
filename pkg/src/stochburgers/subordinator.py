"""Positive stable subordinator with Laplace exponent eta^{alpha/2}.

``E exp(-eta S_t) = exp(-t eta^{alpha/2})``.  Increments are drawn with Kanter's
representation of the one-sided stable law, which is exact: for
``U ~ Uniform(0, pi)`` and ``E ~ Exp(1)``,

    S_1 = sin(rho U) / sin(U)^{1/rho} * (sin((1 - rho) U) / E)^{(1 - rho)/rho},

with ``rho = alpha/2``, and ``S_dt = dt^{1/rho} S_1`` in law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import linregress

from .rng import derive_seed, make_rng

__all__ = [
    "StableSubordinatorSampler",
    "kanter_transform",
    "negative_moment_exact",
    "laplace_transform_exact",
    "SubordinatorReport",
    "verify_subordinator",
]


def kanter_transform(rho: float, u: np.ndarray, e: np.ndarray) -> np.ndarray:
    return np.sin(rho * u) / np.sin(u) ** (1.0 / rho) * (np.sin((1.0 - rho) * u) / e) ** ((1.0 - rho) / rho)


def laplace_transform_exact(eta: float, t: float, alpha: float) -> float:
    return math.exp(-t * eta ** (alpha / 2))


def negative_moment_exact(q: float, t: float, alpha: float) -> float:
    """E S_t^{-q} = t^{-2q/alpha} Gamma(2q/alpha + 1) / Gamma(q + 1)."""
    return float(math.exp(gammaln(2 * q / alpha + 1) - gammaln(q + 1)) * t ** (-2 * q / alpha))


class StableSubordinatorSampler:
    """Sampler for increments of the alpha/2-stable subordinator.

    Parameters
    ----------
    alpha : float
        Stability index of the subordinated noise, in (1, 2).
    seed : int, optional
        Base seed; the stream is ``make_rng(seed, worker_index)``.
    rng : numpy.random.Generator, optional
        Use an existing generator instead of deriving one.
    frozen : bool
        Test hook: every increment equals ``dt`` exactly (S_t = t).
    """

    def __init__(self, alpha: float = 1.5, seed: int = 0, worker_index: int = 0,
                 rng: np.random.Generator | None = None, frozen: bool = False):
        if not 1.0 < alpha < 2.0:
            raise ValueError(f"alpha must lie in (1, 2), got {alpha}")
        self.alpha = float(alpha)
        self.rho = self.alpha / 2.0
        self.frozen = frozen
        self.rng = rng if rng is not None else make_rng(seed, worker_index)

    def standard(self, size=None) -> np.ndarray:
        """Draws of S_1."""
        u = math.pi * (1.0 - self.rng.random(size))  # (0, pi]
        e = self.rng.standard_exponential(size)
        e = np.asarray(e)
        while np.any(e == 0.0):
            e = np.where(e == 0.0, self.rng.standard_exponential(e.shape), e)
        return kanter_transform(self.rho, u, e)

    def sample(self, dt, size=None) -> np.ndarray:
        """Increments S_{t+dt} - S_t; ``dt`` may be an array broadcast against ``size``."""
        dt = np.asarray(dt, dtype=float)
        if np.any(dt <= 0):
            raise ValueError("dt must be positive")
        if self.frozen:
            return np.broadcast_to(dt, size if size is not None else dt.shape).astype(float)
        return dt ** (1.0 / self.rho) * self.standard(size if size is not None else dt.shape or None)

    def sample_increment(self, dt: float) -> float:
        return float(self.sample(dt, None))

    def sample_value(self, t: float, size=None) -> np.ndarray:
        """S_t itself (S_0 = 0)."""
        return self.sample(t, size)

    def estimate_negative_moment(self, q: float, t: float, n_samples: int) -> tuple[float, float]:
        """Monte Carlo E S_t^{-q} and its standard error."""
        if q < 0 or t <= 0:
            raise ValueError("need q >= 0 and t > 0")
        if n_samples < 1000:
            raise ValueError("n_samples must be at least 1000")
        if q == 0:
            return 1.0, 0.0
        x = self.sample(t, n_samples) ** (-q)
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_samples))

    def small_ball_probability(self, r: float, t: float, n_samples: int) -> float:
        if r <= 0 or t <= 0:
            raise ValueError("need r > 0 and t > 0")
        return float(np.mean(self.sample(t, n_samples) <= r))

    def laplace_estimate(self, eta: float, t: float, n_samples: int) -> tuple[float, float]:
        x = np.exp(-eta * self.sample(t, n_samples))
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_samples))


@dataclass
class SubordinatorReport:
    """Rows (test, parameter, estimate, stderr, target, pass)."""

    records: list

    def rows(self):
        for r in self.records:
            yield dict(r)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.records)


def verify_subordinator(alphas=(1.2, 1.5, 1.8), etas=(0.5, 1.0, 2.0, 4.0), n_draws: int = 1_000_000,
                        slope_alpha: float = 1.5, slope_times=tuple(2.0 ** -np.arange(6, 0, -1)),
                        n_slope: int = 100_000, seed: int = 0, z: float = 3.0,
                        slope_tolerance: float = 0.1) -> SubordinatorReport:
    """Laplace transform at every (alpha, eta) and the scaling of E S_t^{-1}.

    Each (alpha, eta) cell and each time t uses an independent stream.  The
    log-log slope of E S_t^{-1} must match -2/alpha within ``slope_tolerance``.
    """
    records = []
    idx = 0
    for alpha in alphas:
        for eta in etas:
            est, se = StableSubordinatorSampler(alpha, rng=make_rng(seed, idx)).laplace_estimate(eta, 1.0, n_draws)
            target = laplace_transform_exact(eta, 1.0, alpha)
            records.append({"test": "laplace", "parameter": f"alpha={alpha:g};eta={eta:g}", "estimate": est,
                            "stderr": se, "target": target, "pass": bool(abs(est - target) <= z * se)})
            idx += 1
    means = []
    for t in slope_times:
        sampler = StableSubordinatorSampler(slope_alpha, rng=make_rng(derive_seed(seed, 1), idx))
        est, se = sampler.estimate_negative_moment(1.0, t, n_slope)
        target = negative_moment_exact(1.0, t, slope_alpha)
        records.append({"test": "negative_moment", "parameter": f"alpha={slope_alpha:g};t={t:g}", "estimate": est,
                        "stderr": se, "target": target, "pass": bool(abs(est - target) <= z * se)})
        means.append(est)
        idx += 1
    fit = linregress(np.log(slope_times), np.log(means))
    slope, slope_se, target = float(fit.slope), float(fit.stderr), -2.0 / slope_alpha
    records.append({"test": "negative_moment_slope", "parameter": f"alpha={slope_alpha:g}", "estimate": slope,
                    "stderr": slope_se, "target": target, "pass": abs(slope - target) <= slope_tolerance})
    return SubordinatorReport(records)

