"""Ergodicity diagnostics: Lyapunov drift, synchronous coupling, mixing proxy, long-run profile.

Total variation is replaced throughout by the largest two-sample KS distance
over a fixed battery of bounded observables, a lower bound on the TV distance
between the laws.  All decay rates are therefore proxy rates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .fitting import envelope_fit, exponential_rate, ks_critical, ks_distance
from .noise import sup_norm_convolution
from .observables import MIXING_BATTERY, observable
from .rng import derive_seed
from .spde import Dynamics, simulate_ensemble
from .spectral import NoiseIntensity, sobolev_norm_coeffs, wavenumbers
from .subordinator import StableSubordinatorSampler

__all__ = [
    "lyapunov_function",
    "LyapunovDriftEstimator",
    "LyapunovReport",
    "lyapunov_drift",
    "CouplingReport",
    "coupling_contraction",
    "MixingReport",
    "mixing_rate",
    "null_calibration",
    "small_noise_frequency",
    "harris_parameters",
    "InvariantProfile",
    "invariant_measure_profile",
    "shaped_initial",
]


def lyapunov_function(c: np.ndarray) -> np.ndarray:
    """V(phi) = 1 + ||phi||_0."""
    return 1.0 + sobolev_norm_coeffs(np.asarray(c, dtype=float), 0.0)


def shaped_initial(norm0: float, n: int, rng: np.random.Generator, decay: float = 1.0) -> np.ndarray:
    """Random profile with k^{-decay} coefficients rescaled to ``||phi||_0 = norm0``."""
    c = rng.standard_normal((2, n)) * wavenumbers(n) ** -decay
    return c * (norm0 / sobolev_norm_coeffs(c, 0.0))


def _drift_model(X, c_v, rate, k_v):
    t, v0 = X
    return c_v * np.exp(-rate * t) * v0 + k_v


class LyapunovDriftEstimator(BaseEstimator):
    """Drift bound E V(u_t) <= C_V exp(-rate t) V(phi) + K_V.

    ``fit`` first estimates the rate (with a confidence interval) by weighted
    least squares on the ensemble means, then, with the rate fixed, takes the
    tightest (C_V, K_V) envelope lying above ``mean + z * stderr`` at every
    calibration point.  ``X`` has columns (t, V(phi)).
    """

    def __init__(self, z: float = 3.0, level: float = 0.95):
        self.z = z
        self.level = level

    def fit(self, X, y, stderr=None):
        X = check_array(X, ensure_min_samples=3)
        y = np.asarray(y, dtype=float)
        se = np.zeros_like(y) if stderr is None else np.asarray(stderr, dtype=float)
        sigma = np.maximum(se, 1e-3 * np.abs(y))
        p0 = (1.0, 1.0, max(float(np.min(y)), 1.0))
        popt, pcov = curve_fit(_drift_model, X.T, y, p0=p0, sigma=sigma, absolute_sigma=False,
                               bounds=([0, 0, 0], [np.inf, np.inf, np.inf]), maxfev=20000)
        q = norm.ppf(0.5 + self.level / 2)
        self.rate_ = float(popt[1])
        self.rate_se_ = float(math.sqrt(max(pcov[1, 1], 0.0)))
        self.rate_ci_ = (self.rate_ - q * self.rate_se_, self.rate_ + q * self.rate_se_)
        feats = np.column_stack([np.exp(-self.rate_ * X[:, 0]) * X[:, 1], np.ones(len(y))])
        self.c_v_, self.k_v_ = (float(v) for v in envelope_fit(feats, y + self.z * se))
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "rate_")
        X = check_array(X)
        return self.c_v_ * np.exp(-self.rate_ * X[:, 0]) * X[:, 1] + self.k_v_

    def holds(self, X, y, stderr=None) -> np.ndarray:
        """Pointwise check mean - z * stderr <= bound."""
        se = 0.0 if stderr is None else np.asarray(stderr, dtype=float)
        return np.asarray(y, dtype=float) - self.z * se <= self.predict(X)


@dataclass
class LyapunovReport:
    times: np.ndarray
    v0: np.ndarray
    ev: np.ndarray
    ev_se: np.ndarray
    c_v: float
    rate: float
    rate_ci: tuple
    k_v: float
    heldout_v0: np.ndarray
    heldout_ev: np.ndarray
    heldout_se: np.ndarray
    heldout_ok: np.ndarray
    n_paths: int
    censored_fraction: float
    crossing_time: float = math.nan
    estimator: LyapunovDriftEstimator | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return bool(self.rate > 0 and self.rate_ci[0] > 0 and np.all(self.heldout_ok)
                    and self.censored_fraction <= 0.05)

    def bound(self, t: float, v0: float) -> float:
        return self.c_v * math.exp(-self.rate * t) * v0 + self.k_v

    def rows(self):
        sets = (("calibration", self.v0, self.ev, self.ev_se, None),
                ("heldout", self.heldout_v0, self.heldout_ev, self.heldout_se, self.heldout_ok))
        for name, v0, ev, se, ok in sets:
            for i, v in enumerate(v0):
                for j, t in enumerate(self.times):
                    b = self.bound(t, v)
                    holds = bool(ok[i, j]) if ok is not None else bool(ev[i, j] <= b)
                    yield {"set": name, "V0": v, "t": t, "EV": ev[i, j], "stderr": se[i, j], "bound": b,
                           "holds": holds}


def _ev_curves(phis, dynamics, h, n_steps, record_every, alpha, seed, n_paths):
    out = simulate_ensemble(phis, dynamics, h, n_steps, alpha, seed, n_paths,
                            observables=("raw_norm0",), record_every=record_every)
    v = 1.0 + out.values["raw_norm0"]  # (C, P, T)
    ok = np.isfinite(v)
    cnt = ok.sum(axis=1)
    mean = np.where(ok, v, 0.0).sum(axis=1) / np.maximum(cnt, 1)
    var = np.where(ok, (v - mean[:, None, :]) ** 2, 0.0).sum(axis=1) / np.maximum(cnt - 1, 1)
    frac = out.n_censored / max(out.censored.size, 1)
    return out.times, mean, np.sqrt(var / np.maximum(cnt, 1)), frac


def lyapunov_drift(dynamics: Dynamics, norms=(1.0, 3.0, 10.0, 30.0, 100.0), n_heldout: int = 20,
                   heldout_range=(1.0, 100.0), h: float = 1e-3, t_end: float = 10.0, record_dt: float = 0.25,
                   n_paths: int = 500, alpha: float = 1.5, seed: int = 0, z: float = 3.0) -> LyapunovReport:
    """Fit the drift bound on calibration data and check it on held-out initial conditions.

    Initial conditions share the noise within each set (calibration and
    held-out use independent seeds).
    """
    n = dynamics.n_modes
    rng = np.random.default_rng(derive_seed(seed, 0))
    cal = np.stack([shaped_initial(r, n, rng) for r in norms])
    held_norms = np.exp(rng.uniform(*np.log(heldout_range), n_heldout))
    held = np.stack([shaped_initial(r, n, rng) for r in held_norms])
    n_steps = int(round(t_end / h))
    every = max(1, int(round(record_dt / h)))
    times, ev, se, f1 = _ev_curves(cal, dynamics, h, n_steps, every, alpha, derive_seed(seed, 1), n_paths)
    _, ev_h, se_h, f2 = _ev_curves(held, dynamics, h, n_steps, every, alpha, derive_seed(seed, 2), n_paths)
    v0 = lyapunov_function(cal)
    X = np.column_stack([np.tile(times, len(v0)), np.repeat(v0, len(times))])
    est = LyapunovDriftEstimator(z=z).fit(X, ev.ravel(), se.ravel())
    vh = lyapunov_function(held)
    Xh = np.column_stack([np.tile(times, len(vh)), np.repeat(vh, len(times))])
    ok = est.holds(Xh, ev_h.ravel(), se_h.ravel()).reshape(len(vh), len(times))
    big = int(np.argmax(v0))
    below = np.nonzero(ev[big] < 2 * est.k_v_)[0]
    crossing = float(times[below[0]]) if below.size else math.inf
    return LyapunovReport(times, v0, ev, se, est.c_v_, est.rate_, est.rate_ci_, est.k_v_, vh, ev_h, se_h, ok,
                          n_paths, max(f1, f2), crossing, est)


@dataclass
class CouplingReport:
    times: np.ndarray
    delta0: float
    radius: float
    n_paths: int
    n_omega: int
    fraction_ok: np.ndarray
    max_ratio: np.ndarray
    constant: float = 2.1
    noise_free_error: float = math.nan

    @property
    def passed(self) -> bool:
        return bool(self.n_omega > 0 and np.all(self.fraction_ok >= 0.99))

    def rows(self):
        for t, f, m in zip(self.times, self.fraction_ok, self.max_ratio):
            yield {"t": t, "delta0": self.delta0, "R": self.radius, "n_paths": self.n_paths,
                   "n_omega": self.n_omega, "fraction_ok": f, "max_ratio": m, "constant": self.constant,
                   "pass": self.passed}


def coupling_contraction(phi1, phi2, dynamics: Dynamics, times, radius: float = 1.0, h: float = 1e-3,
                         n_paths: int = 2000, alpha: float = 1.5, seed: int = 0, constant: float = 2.1,
                         z_horizon: float = 1.0) -> CouplingReport:
    """Synchronous coupling: ||u_t(phi1) - u_t(phi2)||_1 <= constant t^{-1/2} ||phi1 - phi2||_0 on Omega_R.

    Omega_R is the event sup_{s <= z_horizon} ||Z_s||_1 <= R.
    """
    phi1 = np.asarray(getattr(phi1, "coeffs", phi1), dtype=float)
    phi2 = np.asarray(getattr(phi2, "coeffs", phi2), dtype=float)
    times = np.asarray(times, dtype=float)
    steps = np.maximum(1, np.round(times / h).astype(int))
    n_steps = int(max(steps.max(), round(z_horizon / h)))
    out = simulate_ensemble(np.stack([phi1, phi2]), dynamics, h, n_steps, alpha, seed, n_paths,
                            observables=(), record_at=steps, z_window=z_horizon, keep_states=True)
    delta0 = float(sobolev_norm_coeffs(phi1 - phi2, 0.0))
    omega = (out.z_sup <= radius) & ~np.any(out.censored, axis=0)
    idx = [int(np.nonzero(np.isclose(out.times, s * h))[0][0]) for s in steps]
    diff = sobolev_norm_coeffs(out.states[0] - out.states[1], 1.0)[:, idx]  # (P, len(times))
    t_eval = steps * h
    if delta0 == 0:
        ratio = np.where(diff == 0, 0.0, np.inf)
    else:
        ratio = diff / (t_eval ** -0.5 * delta0)
    r = ratio[omega]
    frac = (r <= constant).mean(axis=0) if r.size else np.zeros(len(times))
    mx = r.max(axis=0) if r.size else np.full(len(times), np.nan)
    return CouplingReport(t_eval, delta0, radius, n_paths, int(omega.sum()), frac, mx, constant)


@dataclass
class MixingReport:
    times: np.ndarray
    observables: tuple
    distances: np.ndarray  # (n_obs, n_times)
    critical: float
    gamma: float
    gamma_ci: tuple
    n_fit_points: int
    n_paths: int
    n_censored: int
    null_fraction: float = math.nan

    @property
    def max_distance(self) -> np.ndarray:
        return self.distances.max(axis=0)

    @property
    def passed(self) -> bool:
        ok = self.gamma > 0 and self.gamma_ci[0] > 0
        if not math.isnan(self.null_fraction):
            ok = ok and self.null_fraction >= 0.98
        return bool(ok)

    def rows(self):
        for j, t in enumerate(self.times):
            row = {"t": t, "max_ks": self.max_distance[j], "critical": self.critical}
            for i, name in enumerate(self.observables):
                row[f"ks_{name}"] = self.distances[i, j]
            yield row


def _final_samples(phi, dynamics, h, t, alpha, seed, n_paths, battery, record_every=None):
    n_steps = max(1, int(round(t / h)))
    out = simulate_ensemble(phi, dynamics, h, n_steps, alpha, seed, n_paths, observables=battery,
                            record_every=record_every or n_steps)
    return out


def mixing_rate(phi1, phi2, dynamics: Dynamics, h: float = 2e-3, t_end: float = 20.0, record_dt: float = 0.25,
                n_paths: int = 10_000, alpha: float = 1.5, seed: int = 0, battery=MIXING_BATTERY,
                saturation: float = 0.9, floor_factor: float = 2.0, level: float = 0.01) -> MixingReport:
    """KS-proxy distance between independent ensembles from phi1 and phi2, with an exponential rate fit.

    The fit uses the times where the distance lies between ``floor_factor``
    times the KS critical value at ``level`` (clear of the noise floor) and
    ``saturation`` (nearly disjoint laws).
    """
    phi1 = np.asarray(getattr(phi1, "coeffs", phi1), dtype=float)
    phi2 = np.asarray(getattr(phi2, "coeffs", phi2), dtype=float)
    every = max(1, int(round(record_dt / h)))
    a = _final_samples(phi1, dynamics, h, t_end, alpha, derive_seed(seed, 0), n_paths, battery, every)
    b = _final_samples(phi2, dynamics, h, t_end, alpha, derive_seed(seed, 1), n_paths, battery, every)
    dist = np.array([[ks_distance(a.values[o][0, :, j], b.values[o][0, :, j]) for j in range(len(a.times))]
                     for o in battery])
    crit = ks_critical(n_paths, n_paths, level)
    dmax = dist.max(axis=0)
    keep = (dmax > floor_factor * crit) & (dmax < saturation)
    g, lo, hi, npts = exponential_rate(a.times[keep], dmax[keep])
    return MixingReport(a.times, tuple(battery), dist, crit, g, (lo, hi), npts, n_paths,
                        a.n_censored + b.n_censored)


def null_calibration(phi, dynamics: Dynamics, t: float = 1.0, h: float = 2e-3, n_paths: int = 1000,
                     n_reps: int = 100, alpha: float = 1.5, seed: int = 0, battery=MIXING_BATTERY,
                     level: float = 0.01) -> tuple[float, int]:
    """Fraction of per-observable KS tests between independent same-law ensembles below the critical value."""
    phi = np.asarray(getattr(phi, "coeffs", phi), dtype=float)
    crit = ks_critical(n_paths, n_paths, level)
    # one run of 2 * n_reps * n_paths paths split into independent pairs
    out = _final_samples(phi, dynamics, h, t, alpha, seed, 2 * n_reps * n_paths, battery)
    passed = 0
    for o in battery:
        x = out.values[o][0, :, -1].reshape(n_reps, 2, n_paths)
        passed += sum(ks_distance(x[r, 0], x[r, 1]) <= crit for r in range(n_reps))
    total = n_reps * len(battery)
    return passed / total, total


def small_noise_frequency(q: NoiseIntensity, t0: float, alpha: float = 1.5, quantile: float = 0.05,
                          n_pilot: int = 2000, n_paths: int = 2000, h: float = 1e-2, seed: int = 0
                          ) -> tuple[float, float]:
    """(eps, P(sup_{s <= t0 + 1} ||Z_s||_1 <= eps)) with eps the pilot ``quantile``."""
    horizon = t0 + 1.0
    n_steps = max(1, int(round(horizon / h)))
    pilot = sup_norm_convolution(q, StableSubordinatorSampler(alpha, seed=seed, worker_index=0), horizon,
                                 n_steps, n_pilot, 1.0)
    eps = float(np.quantile(pilot, quantile))
    main = sup_norm_convolution(q, StableSubordinatorSampler(alpha, seed=seed, worker_index=1), horizon,
                                n_steps, n_paths, 1.0)
    return eps, float(np.mean(main <= eps))


def harris_parameters(c1: float, c2: float, radius: float) -> tuple[float, float]:
    """eps0 = 1/(2 C1) ^ 1/sqrt(2 C2 + 1) and t0 = 2 log(R^2 / eps0^4)."""
    inv1 = math.inf if c1 <= 0 else 1 / (2 * c1)
    eps0 = min(inv1, 1 / math.sqrt(2 * c2 + 1))
    return eps0, 2 * math.log(radius**2 / eps0**4)


@dataclass
class InvariantProfile:
    observable: str
    time_average: float
    time_se: float
    ensemble: tuple  # (mean, se) per initial condition
    ks: float
    critical: float

    @property
    def birkhoff_agrees(self) -> bool:
        m, s = self.ensemble[0]
        return abs(self.time_average - m) <= 3 * math.hypot(self.time_se, s)

    @property
    def unique(self) -> bool:
        return self.ks <= self.critical

    def rows(self):
        yield {"observable": self.observable, "time_average": self.time_average, "time_se": self.time_se,
               "ensemble_mean_a": self.ensemble[0][0], "ensemble_se_a": self.ensemble[0][1],
               "ensemble_mean_b": self.ensemble[1][0], "ensemble_se_b": self.ensemble[1][1],
               "ks": self.ks, "critical": self.critical, "birkhoff_agrees": self.birkhoff_agrees,
               "unique": self.unique}


def invariant_measure_profile(dynamics: Dynamics, phi_a, phi_b, obs: str = "norm0", h: float = 2e-3,
                              burn_in: float = 10.0, t_long: float = 400.0, t_large: float = 10.0,
                              n_paths: int = 2000, n_batches: int = 20, alpha: float = 1.5, seed: int = 0,
                              level: float = 0.01) -> InvariantProfile:
    """Time average along one long path against ensemble averages at a large time from two starts."""
    o = observable(obs)
    phi_a = np.asarray(getattr(phi_a, "coeffs", phi_a), dtype=float)
    phi_b = np.asarray(getattr(phi_b, "coeffs", phi_b), dtype=float)
    n_burn = int(round(burn_in / h))
    n_steps = n_burn + int(round(t_long / h))
    sampler = StableSubordinatorSampler(alpha, seed=derive_seed(seed, 0))
    from .spde import run_paths

    long = run_paths(phi_a, dynamics, h, n_steps, sampler, observables=(o,), record_every=1)
    series = long.values[o.name][0, n_burn:]
    series = series[np.isfinite(series)]
    means = np.array([b.mean() for b in np.array_split(series, n_batches)])
    t_avg, t_se = float(series.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))
    ens = []
    samples = []
    for i, phi in enumerate((phi_a, phi_b)):
        out = _final_samples(phi, dynamics, h, t_large, alpha, derive_seed(seed, 1 + i), n_paths, (o,))
        x = out.values[o.name][0, :, -1]
        x = x[np.isfinite(x)]
        samples.append(x)
        ens.append((float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))))
    ks = ks_distance(samples[0], samples[1])
    return InvariantProfile(o.name, t_avg, t_se, tuple(ens), ks, ks_critical(samples[0].size, samples[1].size, level))
