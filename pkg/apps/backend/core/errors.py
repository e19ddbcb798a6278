"""
Error Types Module

This module defines the exception hierarchy shared by the Gaussian PEPS engine.
"""

from typing import Any, Dict, Optional


class GaussianPepsError(Exception):
    """Base exception for Gaussian PEPS errors."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.details: Dict[str, Any] = dict(details or {})


class ValidationError(GaussianPepsError):
    """Exception raised when a matrix or mode set fails validation."""
    pass


class GeometryError(GaussianPepsError):
    """Exception raised when a lattice cannot support the requested operation."""
    pass


class GapError(GaussianPepsError):
    """Exception raised when a quadratic Hamiltonian is gapless."""
    pass


class RepresentationError(GaussianPepsError):
    """Exception raised when a Gaussian state has no pairing form relative to the vacuum."""
    pass


class ContractionError(GaussianPepsError):
    """Exception raised when a bond projection annihilates the state."""
    pass


class SymmetryViolationError(GaussianPepsError):
    """Exception raised when a rotation action is inconsistent."""
    pass


class PreconditionError(GaussianPepsError):
    """Exception raised when construction parameters are out of range."""
    pass


class OracleSizeError(GaussianPepsError):
    """Exception raised when the Fock oracle would exceed its mode budget."""
    pass


class ConfigError(GaussianPepsError):
    """Exception raised for invalid experiment configurations."""
    pass


class StateFileError(GaussianPepsError):
    """Exception raised when a state file cannot be read or written."""
    pass


# Families reported as numerical failures by the command line
NUMERICAL_ERRORS = (
    GapError,
    RepresentationError,
    ContractionError,
    PreconditionError,
    OracleSizeError,
    StateFileError,
    SymmetryViolationError,
    ValidationError,
    GeometryError,
)
