"""
Error types for the billiard lab

Every error carries a category that the CLI maps to an exit code.
"""

from typing import Any, Dict, Optional

VALIDATION = 'validation'
SOLVER = 'solver'
FIT = 'fit'

EXIT_CODES = {
    VALIDATION: 1,
    SOLVER: 2,
    FIT: 3,
}


class BilliardError(Exception):
    """Base class for all billiard lab errors."""

    category = SOLVER

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.category]

    def to_dict(self) -> Dict[str, Any]:
        """Structured error record."""
        record = {
            'error': type(self).__name__,
            'category': self.category,
            'message': self.message,
        }
        if self.details:
            record['details'] = self.details
        return record


# Validation errors

class ValidationError(BilliardError, ValueError):
    category = VALIDATION


class ConfigError(ValidationError):
    pass


class DegenerateChord(ValidationError):
    pass


class NotHyperbolic(ValidationError):
    pass


class NearUnitLambda(ValidationError):
    pass


# Solver errors

class GluingHit(BilliardError):
    category = SOLVER


class TangentialShot(BilliardError):
    category = SOLVER


class InfeasibleChord(BilliardError):
    category = SOLVER


class NoConvergence(BilliardError):
    category = SOLVER


class InfeasibleOrbit(BilliardError):
    category = SOLVER


class NonConcave(BilliardError):
    category = SOLVER


class OrbitBifurcation(BilliardError):
    category = SOLVER


class NumericalFailure(BilliardError):
    """A linear algebra or floating point failure inside a solver."""

    category = SOLVER

    @classmethod
    def wrap(cls, error: Exception) -> 'NumericalFailure':
        return cls(f"{type(error).__name__}: {error}", {'cause': type(error).__name__})


# Fit errors

class InsufficientDecayWindow(BilliardError):
    category = FIT


class ParityMismatch(BilliardError):
    category = FIT


class FitUnstable(BilliardError):
    category = FIT


class NoRealRoot(BilliardError):
    category = FIT
