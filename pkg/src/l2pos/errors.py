"""Exception hierarchy.

Input-type errors map to CLI exit status 2, numerical ones to exit status 3.
"""


class L2PosError(Exception):
    """Base class for every error raised by this package."""


class InputError(L2PosError, ValueError):
    """Malformed or out-of-contract input."""


class RefusalError(InputError):
    """Request refused because it would blow up combinatorially."""


class MarginError(InputError):
    """Evaluation point too close to the domain boundary."""


class UnsupportedDimensionError(InputError):
    pass


class PreconditionError(InputError):
    """A documented precondition does not hold for the supplied data."""


class NumericalError(L2PosError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class DefinitenessError(NumericalError):
    """An operator that must be positive definite is not.

    ``location`` carries the offending point when known.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SolverError(NumericalError):
    """Iterative solver failed to converge."""


class InconsistencyError(NumericalError):
    """Right-hand side is not in the range of the operator."""


class ResolutionError(NumericalError):
    """Quadrature resolution is insufficient for the requested accuracy."""
