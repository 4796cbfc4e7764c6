"""Exception hierarchy shared by every module."""


class XcovError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(XcovError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class DegenerateInputError(XcovError, ValueError):
    """Input is structurally degenerate (zero polynomial, zero vector, ...)."""


class SolverError(XcovError, RuntimeError):
    """A root finder produced a result that contradicts a proven root count."""


class BracketError(SolverError):
    """No sign change was found inside the search bracket."""


class ConvergenceError(XcovError, RuntimeError):
    """An iterative decomposition failed to converge."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class ConsistencyError(XcovError, ArithmeticError):
    """Two independent computations of the same quantity disagree."""


class ConfigError(XcovError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
