"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class DomainError(ContractError):
    """A numeric parameter lies outside its admissible range."""

    def __init__(self, key, value, message=None):
        self.key = key
        self.value = value
        super().__init__(message or f"{key}={value!r} is outside its admissible range")


class ConvergenceError(RuntimeError):
    """An iterative or extrapolated computation failed to settle.

    ``trace`` holds the per-step diagnostics that led to the failure.
    """

    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)
