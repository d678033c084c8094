"""Localized data-driven stochastic multiscale basis functions for elliptic
problems with random coefficients on the unit square."""

from . import chaos, coeff, fem, mesh, offline, online, reduction, reference
from .errors import (
    BasisFormatError,
    ConfigError,
    EllipticityError,
    InfeasibleConstraintError,
    InvalidArgumentError,
    MsdsError,
    SolverError,
)

__version__ = "0.1.0"

__all__ = [
    "chaos",
    "coeff",
    "fem",
    "mesh",
    "offline",
    "online",
    "reduction",
    "reference",
    "BasisFormatError",
    "ConfigError",
    "EllipticityError",
    "InfeasibleConstraintError",
    "InvalidArgumentError",
    "MsdsError",
    "SolverError",
]
