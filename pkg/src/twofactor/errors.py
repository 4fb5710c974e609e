"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid model or law parameter."""


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class UsageError(ValueError):
    """Inconsistent call (e.g. mismatched array lengths)."""


class ValidationError(ValueError):
    """A ModelSpec (or config) field violates an invariant."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericAccuracyError(ArithmeticError):
    """Quadrature failed to reach its tolerance."""

    def __init__(self, message: str, achieved: float):
        self.achieved = achieved
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")


class CertificateNotFound(RuntimeError):
    """No positive contraction rate found on the grid."""

    def __init__(self, message: str, worst_points, worst_margins):
        self.worst_points = worst_points
        self.worst_margins = worst_margins
        super().__init__(message)
