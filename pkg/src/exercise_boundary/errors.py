"""Exception types raised by the solvers."""


class BoundaryError(Exception):
    """Base class for all errors raised by this package."""


class VolatilityDomainError(BoundaryError, ValueError):
    """A volatility model was evaluated outside of its domain."""


class SingularVolatilityError(VolatilityDomainError):
    """The Frey-Stremme denominator vanished."""


class IntegrationError(BoundaryError, RuntimeError):
    """ODE integration for the Barles-Soner table broke down."""


class SingularSystemError(BoundaryError, ArithmeticError):
    """Zero pivot met during tridiagonal elimination."""

    def __init__(self, row: int):
        super().__init__(f"zero pivot in tridiagonal elimination at row {row}")
        self.row = row


class NonConvergenceError(BoundaryError, RuntimeError):
    """An iteration hit its cap before reaching the requested tolerance.

    Attributes
    ----------
    residual : float
        Last measured residual.
    iterations : int
        Number of iterations performed.
    level : int or None
        Time level (splitting solver) at which the failure happened.
    partial : object or None
        Partially computed result kept for post-mortem inspection.
    """

    def __init__(self, message, residual, iterations, level=None, partial=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.level = level
        self.partial = partial


class OutOfRegionError(BoundaryError, ValueError):
    """Asset price lies in the exercise region, above the free boundary."""


class ConfigError(BoundaryError, ValueError):
    """Invalid run configuration.  ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
