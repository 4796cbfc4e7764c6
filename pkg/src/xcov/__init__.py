"""Asymptotic spectral theory of spiked cross-covariance matrices, with a simulator and PLS."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketError,
    ConfigError,
    ConsistencyError,
    ConvergenceError,
    DegenerateInputError,
    DomainError,
    SolverError,
    XcovError,
)
from .polys import AspectRatios, CubicCoeffs, Spike  # noqa: E402

__all__ = [
    "AspectRatios",
    "BracketError",
    "ConfigError",
    "ConsistencyError",
    "ConvergenceError",
    "CubicCoeffs",
    "DegenerateInputError",
    "DomainError",
    "SolverError",
    "Spike",
    "XcovError",
]
