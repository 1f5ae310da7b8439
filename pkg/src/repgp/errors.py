"""Exception hierarchy shared across the package."""


class RepGPError(Exception):
    """Base class for all package errors."""


class ValidationError(RepGPError):
    """Invalid inputs: shapes, bounds, domains, malformed files."""


class FactorizationError(RepGPError):
    """Cholesky failed even after the bounded jitter retries."""


class ConvergenceError(RepGPError):
    """Optimizer failed; carries the best point seen so far."""

    def __init__(self, message, best_x=None, best_f=None):
        super().__init__(message)
        self.best_x = best_x
        self.best_f = best_f
