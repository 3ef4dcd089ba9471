"""Exception types shared across the package."""


class AAHBathError(Exception):
    """Base class for all package errors."""


class ConfigError(AAHBathError, ValueError):
    """Invalid or unparsable model configuration."""


class SingularInputError(AAHBathError, ValueError):
    """Input sits on a singular point (band edge, van Hove point)."""


class DomainError(AAHBathError, ValueError):
    """Input outside the region where a representation is valid."""


class SeriesError(AAHBathError, ArithmeticError):
    """A power series failed to converge within its term cap.

    The partial sum and the last term are kept for inspection.
    """

    def __init__(self, message, partial_sum, last_term):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.last_term = last_term


class NumericalError(AAHBathError, ArithmeticError):
    """A numerical algorithm failed (non-convergence, blow-up)."""


class PropagationError(NumericalError):
    """Time stepping produced non-finite amplitudes."""

    def __init__(self, message, step, time):
        super().__init__(message)
        self.step = step
        self.time = time
