"""Bounded functionals of a field, evaluated on batched coefficient arrays.

Names:

``const``            the constant 1
``cos<k>``, ``sin<k>``  basis coefficient of wavenumber k clamped to [-1, 1]
``norm0``, ``norm1``   Sobolev norm clamped to [0, 1]; ``norm0:5`` divides by 5 first
``raw_norm0``, ``raw_norm1``, ``raw_cos<k>``, ``raw_sin<k>``  unclamped versions
                     (for trajectory records, not for expectations)
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import sobolev_norm_coeffs

__all__ = ["Observable", "observable", "TRAJECTORY_OBSERVABLES", "MIXING_BATTERY"]

_PATTERN = re.compile(r"^(raw_)?(const|norm0|norm1|cos\d+|sin\d+)(?::([0-9.eE+-]+))?$")


@dataclass(frozen=True)
class Observable:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    bound: float  # sup |Phi|, inf when unclamped

    def __call__(self, c: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(c, dtype=float))


def observable(name: str) -> Observable:
    m = _PATTERN.match(name.strip())
    if not m:
        raise ValueError(f"unknown observable {name!r}")
    raw, base, scale = m.group(1) is not None, m.group(2), float(m.group(3) or 1.0)
    if scale <= 0:
        raise ValueError("observable scale must be positive")
    if base == "const":
        return Observable(name, lambda c: np.ones(c.shape[:-2]), 1.0)
    if base.startswith("norm"):
        gamma = float(base[-1])
        f = lambda c: sobolev_norm_coeffs(c, gamma) / scale  # noqa: E731
        return Observable(name, f if raw else lambda c: np.minimum(f(c), 1.0), np.inf if raw else 1.0)
    row, k = (0 if base.startswith("cos") else 1), int(base[3:])
    if k < 1:
        raise ValueError("wavenumber must be at least 1")

    def coef(c):
        if k > c.shape[-1]:
            return np.zeros(c.shape[:-2])
        return c[..., row, k - 1] / scale

    return Observable(name, coef if raw else lambda c: np.clip(coef(c), -1.0, 1.0), np.inf if raw else 1.0)


TRAJECTORY_OBSERVABLES = ("raw_norm0", "raw_norm1") + tuple(
    f"raw_{kind}{k}" for k in range(1, 5) for kind in ("cos", "sin"))
MIXING_BATTERY = ("cos1", "sin1", "cos2", "sin2", "norm0:5", "norm1:5")
