"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedFamilyError(DomainError):
    """The operation is not defined for this distribution family."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class QuadratureError(NumericalError):
    """Adaptive quadrature exhausted its subdivision budget."""
