"""Exception types shared across the package.

The CLI maps these onto its exit codes: UsageError -> 2, DataFormatError -> 3,
RangeOverflowError -> 4.
"""


class UsageError(ValueError):
    """Invalid parameters or flag combinations."""


class DataFormatError(ValueError):
    """Malformed input files or inconsistent vector shapes."""


class RangeOverflowError(ArithmeticError):
    """The squared norm overflowed the target format; the iteration cannot run."""
