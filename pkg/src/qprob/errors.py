"""Exception hierarchy shared by all qprob modules."""


class QProbError(Exception):
    """Base class for every error raised by qprob."""


class DimensionError(QProbError, ValueError):
    """Shapes, dimensions or sample spaces do not match."""


class DomainError(QProbError, ValueError):
    """A spectrum falls outside the domain of a spectral function."""


class NotPSDError(DomainError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class PreconditionError(QProbError, ValueError):
    """A mathematical precondition of an operation does not hold."""


class ConvergenceError(QProbError, ArithmeticError):
    """An iterative procedure did not converge.

    ``gap`` holds the last measured distance between successive iterates.
    """

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class NumericalError(QProbError, ArithmeticError):
    """A numerical kernel failed (e.g. eigensolver non-convergence)."""


class InstanceError(QProbError, ValueError):
    """An instance file violates the schema.  ``path`` is a JSON path."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
