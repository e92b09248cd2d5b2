"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, `DataError` exits 2,
`NumericError` exits 3.
"""


class FairnormError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FairnormError):
    """A file or record is malformed: bad format, dimension mismatch,
    duplicate IDs, unknown model version, truncated/corrupted input."""


class NumericError(FairnormError):
    """A computation is degenerate for the given inputs: empty score sets,
    zero-norm vectors, more clusters or folds than the data supports."""
