"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: InputError -> 2, ConvergenceError and
FittingError -> 3, anything else -> 1.
"""


class ProfileNullError(Exception):
    """Base class for all package errors."""


class InputError(ProfileNullError):
    """Invalid user input: bad values, malformed files, schema violations."""


class ConvergenceError(ProfileNullError):
    """An iterative procedure failed to converge."""


class FittingError(ProfileNullError):
    """A model fit is ill-posed on the given data (e.g. degenerate null set)."""
