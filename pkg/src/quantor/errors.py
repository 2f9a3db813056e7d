"""Exception types shared across the package."""


class QuantorError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(QuantorError, ValueError):
    """A point/vector does not match the dimension of its space."""


class NotDifferentiable(QuantorError, ValueError):
    """Norm gradient requested at a point where it does not exist (x = 0)."""


class DegeneratePoint(NotDifferentiable):
    """L1-type gradient requested at a point with a zero coordinate.

    Callers may fall back to the a.e. variant (sign(0) = 0) instead.
    """


class UnsupportedOperation(QuantorError, ValueError):
    """Operation outside its declared (space, distribution, r) domain."""


class PreconditionError(QuantorError, ValueError):
    """An operation's stated precondition is violated."""


class NumericRange(QuantorError, ArithmeticError):
    """A computed value left the finite floating-point range."""


class NoSplitPoint(QuantorError, RuntimeError):
    """Splitting initialization exhausted its rejection budget."""


class DegenerateInput(QuantorError, ValueError):
    """Optimizer input from which no progress is possible (e.g. all cells empty)."""
