class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class NumericError(ArithmeticError):
    """A numerical routine produced non-finite values or failed to converge."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class InvariantViolation(AssertionError):
    """A quantity guaranteed by the theory was violated at runtime.

    Raised, for instance, when the surrogate loss falls below the expected
    target loss of the decoder, which means the decoder is broken.
    """

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index
