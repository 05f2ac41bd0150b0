"""Exception types shared across the solver modules.

The CLI maps these onto distinct exit codes: validation/parse errors,
convergence failures, and I/O errors are kept apart.
"""


class ValidationError(ValueError):
    """Invalid domain input: degenerate ensemble, malformed channel, bad config."""


class ConfigurationError(ValidationError):
    """Structurally impossible request (divisibility, population too small, ...)."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its residual target."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
