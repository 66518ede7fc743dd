"""Exception types shared across the simulator."""


class NmpuError(Exception):
    """Base class for simulator errors."""


class RangeError(NmpuError, ValueError):
    """A real value does not fit the requested fixed-point format."""


class WidthError(NmpuError, ValueError):
    """A fixed-point result would exceed the 64-bit raw width limit."""


class FormatError(NmpuError, ValueError):
    """An operand has the wrong fixed-point format for the operation."""


class DomainError(NmpuError, ValueError):
    """A numeric argument is outside the domain of the formula."""


class ParameterError(NmpuError, ValueError):
    """A generator or model parameter is out of its valid range."""


class SingularFit(NmpuError, ValueError):
    """A least-squares fit has no unique solution (constant curve)."""


class ShapeError(NmpuError, ValueError):
    """Array dimensions do not match."""
