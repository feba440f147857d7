"""Exception types raised by the library."""


class LinalgError(Exception):
    """Base class for all errors raised by lazymat."""


class DimensionError(LinalgError):
    """A matrix has the wrong shape for the requested construction."""


class LengthError(LinalgError):
    """A value sequence does not match the requested element count."""


class ConformanceError(LinalgError):
    """Operand shapes do not conform for an expression node."""


class SingularMatrixError(LinalgError):
    """A factorisation hit an exactly-zero pivot.

    The failing column (0-based) is available as ``column``.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class KernelContractError(LinalgError):
    """A kernel was invoked with operands violating its preconditions.

    This indicates a programming error in plan construction, not bad
    user input; user-facing shape problems surface as ConformanceError
    during validation instead.
    """


class BenchMismatchError(LinalgError):
    """Naive and optimised arms disagreed before timing started."""
