"""Exception types raised across the package."""


class GkaeError(Exception):
    """Base class for package errors."""


class DimensionMismatch(GkaeError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class NotSymmetric(GkaeError, ValueError):
    pass


class KTooLarge(GkaeError, ValueError):
    pass


class ZeroVector(GkaeError, ValueError):
    pass


class NotScalarLoss(GkaeError, ValueError):
    pass


class NonFiniteError(GkaeError, ArithmeticError):
    """An operation produced NaN or inf; the message names the operation."""


class LTooLarge(GkaeError, ValueError):
    pass


class RateOutOfRange(GkaeError, ValueError):
    pass


class MissingTargets(GkaeError, ValueError):
    pass


class Unfillable(GkaeError, ValueError):
    pass


class EmptyScope(GkaeError, ValueError):
    pass


class ParseError(GkaeError, ValueError):
    def __init__(self, message, row=None, col=None):
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + loc)
        self.row = row
        self.col = col


class FormatError(GkaeError, ValueError):
    """Unrecognized or mismatched file format tag."""


