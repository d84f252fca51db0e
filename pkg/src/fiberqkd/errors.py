"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class FitConvergenceError(RuntimeError):
    """An iterative fit failed to reach a usable solution."""


class PatternExhaustedError(ValidationError):
    """A modulation pattern ran out of entries before the request was met."""
