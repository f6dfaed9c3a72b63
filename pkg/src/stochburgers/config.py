"""Flat ``key = value`` experiment configuration.

Lines are ``key = value`` with ``#`` starting a comment.  Unknown keys and
out-of-range values raise :class:`ConfigError` naming the violated constraint.
Lists are comma separated.  ``sample_scale`` multiplies the Monte Carlo sample
counts of the verification suites (1 gives the full sizes).  ``initial`` lists trig components such as
``sin1:5, cos2:0.1``, meaning the function ``5 sin(x) + 0.1 cos(2x)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .spectral import NoiseIntensity, SpectralField

__all__ = ["SimConfig", "parse_config", "parse_initial", "ERGODICITY_SUITES"]

ERGODICITY_SUITES = ("ergodicity",)
NONLINEARITIES = ("burgers", "truncated", "linear")


@dataclass(frozen=True)
class SimConfig:
    alpha: float = 1.5
    theta: float = 1.75
    theta_prime: float = 1.75
    delta: float = 1.0
    n_modes: int = 16
    dt: float = 1e-3
    t_end: float = 1.0
    r_truncation: float | None = None
    seed: int = 0
    ensemble_size: int = 1000
    observables: tuple[str, ...] = ("norm0", "norm1", "cos1", "sin1")
    output_path: str = "out"
    noise_scale: float = 1.0
    nonlinearity: str = "burgers"
    initial: str = "sin1:0.1"
    record_every: int = 1
    sample_scale: float = 1.0
    suites: tuple[str, ...] = field(default=())

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def noise(self) -> NoiseIntensity:
        if self.noise_scale == 1.0:
            return NoiseIntensity(self.n_modes, self.theta, self.theta_prime, self.delta)
        k = np.arange(1, self.n_modes + 1, dtype=float)
        return NoiseIntensity(self.n_modes, self.theta, self.theta_prime, self.delta,
                              self.noise_scale * k**-self.theta, check_bounds=False)

    def dynamics(self):
        from .spde import Dynamics

        return Dynamics(self.noise(), self.nonlinearity, self.r_truncation)

    def initial_field(self) -> SpectralField:
        return parse_initial(self.initial, self.n_modes)

    def snapshot(self) -> dict:
        out = asdict(self)
        out["observables"] = ",".join(self.observables)
        out["suites"] = ",".join(self.suites)
        out["r_truncation"] = "none" if self.r_truncation is None else self.r_truncation
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}


def parse_initial(text: str, n_modes: int) -> SpectralField:
    """``"sin1:5, cos2:0.1"`` -> basis coefficients of 5 sin(x) + 0.1 cos(2x)."""
    c = np.zeros((2, n_modes))
    text = text.strip()
    if text in ("", "zero", "0"):
        return SpectralField(c)
    for part in text.split(","):
        name, _, amp = part.strip().partition(":")
        kind, k = name[:3], name[3:]
        if kind not in ("cos", "sin") or not k.isdigit() or not amp:
            raise ConfigError(f"bad initial component {part.strip()!r}; expected e.g. sin1:0.5")
        k = int(k)
        if not 1 <= k <= n_modes:
            raise ConfigError(f"initial wavenumber {k} outside 1..n_modes={n_modes}")
        # trig function -> orthonormal basis coefficient
        c[0 if kind == "cos" else 1, k - 1] += float(amp) * math.sqrt(math.pi)
    return SpectralField(c)


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if key == "r_truncation":
            return None if raw.lower() == "none" else float(raw)
        if key in ("observables", "suites"):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return raw


def _validate(cfg: SimConfig) -> None:
    if not 1.0 < cfg.alpha < 2.0:
        raise ConfigError(f"alpha={cfg.alpha} violates the constraint alpha in (1,2)")
    if cfg.delta <= 0:
        raise ConfigError("delta must be positive")
    if not cfg.theta >= cfg.theta_prime >= 0:
        raise ConfigError("need theta >= theta_prime >= 0")
    if any(s in ERGODICITY_SUITES for s in cfg.suites):
        if not cfg.theta_prime > 1.5:
            raise ConfigError(
                f"theta_prime={cfg.theta_prime} must exceed 3/2 (3/2 < theta' <= theta < 2 is required for ergodicity)")
        if not cfg.theta < 2:
            raise ConfigError(f"theta={cfg.theta} must be below 2 (3/2 < theta' <= theta < 2 is required for ergodicity)")
    if cfg.n_modes < 1:
        raise ConfigError("n_modes must be positive")
    if not (cfg.dt > 0 and cfg.t_end > 0):
        raise ConfigError("dt and t_end must be positive")
    if cfg.ensemble_size < 1 or cfg.record_every < 1:
        raise ConfigError("ensemble_size and record_every must be positive")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.nonlinearity not in NONLINEARITIES:
        raise ConfigError(f"nonlinearity must be one of {NONLINEARITIES}")
    if cfg.nonlinearity == "truncated" and cfg.r_truncation is None:
        raise ConfigError("truncated nonlinearity needs r_truncation")
    if cfg.r_truncation is not None and cfg.r_truncation <= 0:
        raise ConfigError("r_truncation must be positive or none")
    if not cfg.sample_scale > 0:
        raise ConfigError("sample_scale must be positive")
    if cfg.noise_scale < 0:
        raise ConfigError("noise_scale must be nonnegative")
    from .observables import observable

    for name in cfg.observables:
        try:
            observable(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    parse_initial(cfg.initial, cfg.n_modes)


def parse_config(text: str, suites: tuple[str, ...] = ()) -> SimConfig:
    """Parse and validate a configuration; ``suites`` adds suite-dependent checks."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    if suites:
        values["suites"] = tuple(dict.fromkeys(tuple(values.get("suites", ())) + tuple(suites)))
    cfg = SimConfig(**values)
    _validate(cfg)
    return cfg
