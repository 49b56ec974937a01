"""Quantum and classical linear mutual information for coupled oscillators."""

from ._backend import BACKEND
from .core import (
    ConfigError,
    ConvergenceError,
    DensitySpec,
    EntropySeries,
    ModelSpec,
    Numerics,
    PhasePoint,
    SubsystemState,
    TimeGrid,
    UnstableModelError,
    ValidatedConfig,
    build_time_grid,
    load_config,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "ConvergenceError",
    "DensitySpec",
    "EntropySeries",
    "ModelSpec",
    "Numerics",
    "PhasePoint",
    "SubsystemState",
    "TimeGrid",
    "UnstableModelError",
    "ValidatedConfig",
    "build_time_grid",
    "load_config",
    "validate",
    "__version__",
]
