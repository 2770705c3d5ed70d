"""Exception hierarchy shared by the solver modules."""


class EPBError(Exception):
    """Base class for all errors raised by :mod:`epbolt`."""


class GridMismatchError(EPBError, ValueError):
    """Two fields living on different grids were combined."""


class DomainError(EPBError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class PreconditionError(EPBError, ValueError):
    """A documented precondition of an operation does not hold."""


class ConvergenceError(EPBError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    ``residual`` is the last residual (or relative increment for the
    Picard loop) and ``trace`` the history of that quantity.
    """

    def __init__(self, message, residual=float("nan"), trace=()):
        super().__init__(message)
        self.residual = float(residual)
        self.trace = list(trace)


class InternalError(EPBError, AssertionError):
    """A structural property guaranteed by construction was violated."""
