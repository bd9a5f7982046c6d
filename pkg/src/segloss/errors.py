"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: validation problems exit 1, numeric
failures (including training divergence) exit 2, file problems exit 3.
"""


class SeglossError(Exception):
    """Base class for all package errors."""


class ValidationError(SeglossError, ValueError):
    """Input violates a documented precondition or invariant."""


class NumericError(SeglossError, ArithmeticError):
    """A computation hit a degenerate or non-finite value."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FormatError(SeglossError, ValueError):
    """A serialized file does not match its declared format."""
