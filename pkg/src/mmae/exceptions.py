"""Exception hierarchy shared by all modules."""


class MMAEError(Exception):
    """Base class for every error raised by this package."""


class InputError(MMAEError, ValueError):
    """Invalid argument: bad shape, out-of-range value, unknown option."""


class ParseError(MMAEError, ValueError):
    """Malformed data file. ``row`` is the 1-based line number when known."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class NumericalError(MMAEError, ArithmeticError):
    """Non-finite values or failure to converge."""
