"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class NumericalBlowupError(RuntimeError):
    """Raised when a simulation or training run produces non-finite values."""
