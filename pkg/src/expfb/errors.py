"""Exception hierarchy shared by all modules."""


class ExpfbError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ExpfbError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class OutOfDomain(DomainError):
    """A point lies outside the closed computational domain."""


class NFunctionOverflow(ExpfbError, OverflowError):
    """The exponent argument of the exponential law exceeds ``exp_cap``."""


class ParseError(ExpfbError, ValueError):
    """A configuration file could not be parsed."""


class ValidationError(ExpfbError, ValueError):
    """A configuration or problem instance breaks an invariant."""


class DimensionMismatch(ExpfbError, ValueError):
    """Array sizes do not match the mesh."""


class NonFiniteEnergy(ExpfbError, ArithmeticError):
    """The starting iterate of a minimization has infinite energy."""


class LineSearchFailure(ExpfbError, RuntimeError):
    """No admissible step was found above the machine floor.

    The offending iterate is kept on ``self.iterate`` so callers can
    write partial outputs.
    """

    def __init__(self, message, iterate=None, trace=None):
        super().__init__(message)
        self.iterate = iterate
        self.trace = trace if trace is not None else []


class DegenerateInput(ExpfbError, ValueError):
    """Input has no content to measure (e.g. an empty polyline set)."""
