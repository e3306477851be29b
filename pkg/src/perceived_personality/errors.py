"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericError` (including :class:`DegenerateError`) to exit code 3.
"""


class PerceivedPersonalityError(Exception):
    """Base class for all package errors."""


class ValidationError(PerceivedPersonalityError, ValueError):
    """Input violates a precondition or schema."""


class NoDataError(ValidationError):
    """An aggregate was requested over an empty collection."""


class NumericError(PerceivedPersonalityError, ArithmeticError):
    """A computation produced a non-finite or undefined value."""


class DegenerateError(NumericError):
    """The input has no variance where the statistic needs some."""
