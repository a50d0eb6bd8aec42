"""Exception taxonomy shared across the package.

CLI exit codes map onto these: ValidationError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class AircastError(Exception):
    pass


class ValidationError(AircastError):
    """Bad configuration, bad arguments, or incompatible shapes."""


class ShapeMismatch(ValidationError):
    """Raised by tensor ops; message names the op and both shapes."""


class DataError(AircastError):
    """Malformed or insufficient input data."""


class NumericalError(AircastError):
    """Non-finite values where finite ones are required (e.g. NaN loss)."""
