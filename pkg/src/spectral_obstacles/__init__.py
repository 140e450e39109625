"""Finite-element laboratory for small obstacles that minimize the first Dirichlet eigenvalue."""

from . import capacity, experiments, fem, geometry, mesh, optimize, spectral
from .errors import (
    AssemblyError,
    ConfigError,
    ConstructionError,
    NonConvergenceError,
    NumericError,
    ParameterError,
    ReachError,
    ResourceError,
    SearchError,
    UndefinedRatioError,
)

__version__ = "0.1.0"

__all__ = [
    "capacity", "experiments", "fem", "geometry", "mesh", "optimize", "spectral",
    "AssemblyError", "ConfigError", "ConstructionError", "NonConvergenceError", "NumericError",
    "ParameterError", "ReachError", "ResourceError", "SearchError", "UndefinedRatioError",
]
