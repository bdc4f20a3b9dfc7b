"""Exception hierarchy shared by all modules."""


class UncertainMarkovError(Exception):
    """Base class for library errors."""


class SizeError(UncertainMarkovError, ValueError):
    """A size bound (site count, enumeration budget) is exceeded."""


class SiteError(UncertainMarkovError, IndexError):
    """A site index is out of range."""


class ShapeError(UncertainMarkovError, ValueError):
    """Array dimensions do not match."""


class ParameterError(UncertainMarkovError, ValueError):
    """A model parameter is invalid (negative rate, nonpositive intensity, ...)."""


class UsageError(UncertainMarkovError, ValueError):
    """An operation was called outside its precondition."""


class NumericalError(UncertainMarkovError, ArithmeticError):
    """A linear solve or residual check failed beyond tolerance."""
