"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`DataError` subclasses exit with 3,
:class:`NumericalError` with 4.
"""


class GridVineError(Exception):
    """Base class for all package errors."""


class DataError(GridVineError, ValueError):
    """Input data or files are unusable."""


class InvalidSpecError(DataError):
    """A copula specification violates its parameter constraints."""


class DomainError(DataError):
    """A coordinate lies outside the domain an operation accepts."""


class DimensionMismatchError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class DegenerateDataError(DataError):
    """A column is constant, so ranks carry no information."""


class MalformedFileError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, column=None):
        where = ", ".join(f"{k} {v}" for k, v in (("line", line), ("column", column)) if v is not None)
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.column = column


class NumericalError(GridVineError, ArithmeticError):
    """An iterative or quadrature routine failed to reach its tolerance."""
