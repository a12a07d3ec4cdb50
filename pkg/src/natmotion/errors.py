"""Exception types shared across the package.

The CLI maps these onto process exit codes: DataError -> 2, NumericError -> 3.
Usage errors are handled by the argument parser itself and exit with 1.
"""


class DataError(Exception):
    """Malformed input data: bad schema, bad shapes, impossible requests."""


class NumericError(Exception):
    """Numerical failure: non-finite values, diverging optimization."""
