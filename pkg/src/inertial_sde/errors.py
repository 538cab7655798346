"""Exception and warning types."""


class InertialSDEError(Exception):
    pass


class ConfigurationError(InertialSDEError, ValueError):
    """Invalid parameters or config keys."""


class DomainError(InertialSDEError, ValueError):
    """Evaluation requested outside the domain of a schedule or trajectory."""


class NumericalError(InertialSDEError, ArithmeticError):
    """Quadrature, root finding or an iterative solver failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class HypothesisViolation(InertialSDEError):
    """A run was refused because a required integrability or damping condition fails."""

    def __init__(self, predicate, message=None):
        super().__init__(message or f"hypothesis violated: {predicate}")
        self.predicate = predicate


class MonteCarloError(InertialSDEError):
    """Too many aborted paths or an unusable Monte Carlo configuration."""


class DampingOvershootWarning(UserWarning):
    """gamma(t_k) * h >= 1 somewhere on the grid."""
