"""Exception types shared across the package.

Numerical failures derive from :class:`NumericalError` (CLI exit code 1),
input problems from :class:`InputError` (CLI exit code 2).
"""


class NumericalError(RuntimeError):
    """Base class for numerical failures."""


class InputError(ValueError):
    """Base class for malformed inputs."""


class TruncationNotConverged(NumericalError):
    """A truncated series did not meet its tail-bound tolerance."""


class InvalidRegime(NumericalError):
    """Parameters outside the validity region of an approximation."""


class DomainError(NumericalError):
    """Argument outside the domain of a moment generating function."""


class ModelMismatch(NumericalError):
    """Operation is undefined for the supplied parameter type."""


class DampingInvalid(NumericalError):
    """Fourier damping parameter violates the model's moment condition."""


class QuadratureNotConverged(NumericalError):
    """Doubling the Fourier grid moved the price by more than tolerance."""


class ContourInvalid(NumericalError):
    """Laplace inversion contour lies outside the transform's strip."""


class InversionNotConverged(NumericalError):
    """Doubling the inversion grid moved the price by more than tolerance."""


class HullViolation(NumericalError):
    """Zero is not inside the convex hull of the residual vectors."""


class MaxIterations(NumericalError):
    """Inner solver exhausted its iteration budget without converging."""


class InsufficientData(InputError):
    """Too few observations for the requested residual dimension."""


class NoConvergence(NumericalError):
    """Outer optimizer failed for every start."""


class InfeasibleEverywhere(NumericalError):
    """Objective was infinite at every evaluated parameter point."""


class BreadSingular(NumericalError):
    """Outer matrix of the sandwich covariance is numerically singular."""


class CrossRouteDisagreement(NumericalError):
    """Two independent pricing routes disagree beyond tolerance."""


class ParseError(InputError):
    """Malformed CSV or config input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonFiniteValue(InputError):
    """A parsed numeric field is NaN or infinite."""


class InvariantViolation(InputError):
    """A parsed record violates a domain-type invariant."""
