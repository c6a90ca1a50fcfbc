class InvalidArgument(ValueError):
    """Raised for inputs outside an operation's domain."""


class OutOfDomain(InvalidArgument):
    """Raised when a price is requested outside the truncated grid."""


class NumericalBreakdown(ArithmeticError):
    """Tridiagonal elimination hit a vanishing or non-finite pivot.

    ``index`` is the grid node where elimination failed; callers further up
    attach ``iteration`` and ``worker`` when known.
    """

    def __init__(self, message, index=None, iteration=None, worker=None):
        super().__init__(message)
        self.index = index
        self.iteration = iteration
        self.worker = worker
