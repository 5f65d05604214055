class TMSError(Exception):
    """Base class of every error raised on purpose by the package."""

    exit_code = 1


class ValidationError(TMSError, ValueError):
    """Bad input, violated precondition or malformed file."""

    exit_code = 2


class NumericError(TMSError, ArithmeticError):
    """A computation could not reach its target at the available resolution."""

    exit_code = 3


class NoTrimmingNeeded(ValidationError):
    """Raised by largest_admissible_u when the whole cube is already within budget."""
