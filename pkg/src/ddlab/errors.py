"""Exception types raised across the package."""


class DDLabError(Exception):
    """Base class for all package errors."""


class DimensionError(DDLabError, ValueError):
    pass


class ChannelError(DDLabError, ValueError):
    pass


class ParameterError(DDLabError, ValueError):
    pass


class DomainError(DDLabError, ValueError):
    pass


class NumericError(DDLabError, ArithmeticError):
    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class InfeasibleError(DDLabError, RuntimeError):
    """An exhaustive computation would exceed its enumeration cap."""

    def __init__(self, what, size, cap):
        super().__init__(f"{what} infeasible: {size} candidates exceeds the enumeration cap of {cap}")
        self.size = size
        self.cap = cap
