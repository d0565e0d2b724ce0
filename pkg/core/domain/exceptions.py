"""Domain exceptions for the resource allocation toolkit.

This module contains custom exceptions that represent domain-specific error
conditions. Each exception carries the process exit code the command-line
entry point reports for it, so library code only ever raises.
"""

from typing import List, Optional


class DomainException(Exception):
    """Base class for all domain exceptions."""
    exit_code = 1


class ConfigValidationError(DomainException):
    """Raised when an experiment config is malformed or inconsistent."""
    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class InvalidDimensionError(DomainException):
    """Raised when vector or matrix sizes do not agree."""
    exit_code = 2

    def __init__(self, what: str, expected, actual):
        super().__init__(
            f"Invalid dimension for {what}: expected {expected}, got {actual}"
        )
        self.expected = expected
        self.actual = actual


class InvalidParameterError(DomainException):
    """Raised when a scalar parameter is outside its admissible range."""
    exit_code = 2


class GraphAssumptionError(DomainException):
    """Raised when a graph is not strongly connected and weight-balanced."""
    exit_code = 4


class NumericalError(DomainException):
    """Base class for numerical failures (integration, solvers)."""
    exit_code = 3


class NumericalBlowupError(NumericalError):
    """Raised when an integrated state becomes non-finite or unbounded."""
    def __init__(self, t: float, message: str = "state left the finite range"):
        super().__init__(f"Numerical blow-up at t={t:.6g}: {message}")
        self.t = t


class StiffnessError(NumericalError):
    """Raised when the adaptive step size underflows."""
    def __init__(self, t: float, h: float):
        super().__init__(
            f"Step size underflow at t={t:.6g} (h={h:.3g}). The system is too stiff "
            "for an explicit method; lower max_step or step_ratio relative to eps."
        )
        self.t = t
        self.h = h


class ConvergenceError(NumericalError):
    """Raised when an iterative solver exhausts its iteration budget."""
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class SingularMatrixError(NumericalError):
    """Raised when a linear system that must be nonsingular is singular."""


class DegenerateProblemError(NumericalError):
    """Raised when the KKT system of a problem is singular."""


class NonContractionError(NumericalError):
    """Raised when the fixed-point map stops contracting."""
    def __init__(self, eps: float, ratios: List[float]):
        super().__init__(
            f"Fixed-point map is not contracting at eps={eps:g} "
            f"(step ratios {', '.join(f'{r:.3g}' for r in ratios)}); "
            "eps is likely above the validity threshold for this problem"
        )
        self.eps = eps
        self.ratios = ratios


class AlreadyConvergedError(NumericalError):
    """Raised when a series has no samples above the numerical floor."""


class InsufficientSamplesError(NumericalError):
    """Raised when a fit window holds too few usable samples."""


class OutputExistsError(DomainException):
    """Raised when an output file exists and overwriting was not requested."""
    def __init__(self, path: str):
        super().__init__(f"Output file already exists: {path} (use --force to overwrite)")
        self.path = path
