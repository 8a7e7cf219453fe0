"""Exception hierarchy shared by every module."""


class LdpLabError(Exception):
    """Base class for all errors raised by ldp_lab."""


class InvalidArgumentError(LdpLabError, ValueError):
    """Inputs violate a documented precondition."""


class ResourceError(LdpLabError):
    """A dense object would exceed the configured dimension cap."""

    def __init__(self, message, n=None, dimension=None, cap=None):
        super().__init__(message)
        self.n = n
        self.dimension = dimension
        self.cap = cap


class NumericError(LdpLabError, ArithmeticError):
    """A numerical routine failed to converge or produced an invalid result."""


class UnsupportedRegimeError(LdpLabError):
    """The requested quantity is not defined for this kind of input."""
