"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the operation."""


class ConvergenceError(RuntimeError):
    """An iterative evaluation failed to reach the requested tolerance."""


class StepSolveError(ConvergenceError):
    """The implicit step solver failed; carries the failing step index."""

    def __init__(self, message, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
