"""Spectral Galerkin simulation and verification of the stochastic Burgers equation
on the torus driven by subordinated cylindrical Brownian noise."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("stochburgers")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .config import SimConfig, parse_config
from .errors import BlowUpError, ConfigError, HorizonTooLargeError
from .rng import derive_seed, make_rng
from .spde import Dynamics, estimate_semigroup, simulate, simulate_ensemble, step
from .spectral import NoiseIntensity, SpectralField
from .subordinator import StableSubordinatorSampler

__all__ = [
    "__version__",
    "SimConfig",
    "parse_config",
    "BlowUpError",
    "ConfigError",
    "HorizonTooLargeError",
    "derive_seed",
    "make_rng",
    "Dynamics",
    "estimate_semigroup",
    "simulate",
    "simulate_ensemble",
    "step",
    "NoiseIntensity",
    "SpectralField",
    "StableSubordinatorSampler",
]
