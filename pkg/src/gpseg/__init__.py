"""Variational solver and certificates for the coupled cubic elliptic system."""

from .errors import ConfigurationError, DimensionError, NotFoundError, SolverError
from .grid import Domain, EigenPair, Grid, build_grid
from .model import Metric, StatePair, SystemParams, Variant
from .solver import Branch, MinimaxSeed, SolveOptions

__all__ = [
    "Branch",
    "ConfigurationError",
    "DimensionError",
    "Domain",
    "EigenPair",
    "Grid",
    "Metric",
    "MinimaxSeed",
    "NotFoundError",
    "SolveOptions",
    "SolverError",
    "StatePair",
    "SystemParams",
    "Variant",
    "build_grid",
]

__version__ = "0.1.0"
