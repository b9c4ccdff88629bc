"""Exception types mapped to CLI exit codes."""


class ThermosplatError(Exception):
    """Base class for all errors raised by this package."""

    code = "E_INTERNAL"
    exit_code = 1


class ValidationError(ThermosplatError):
    """Bad input: schema violations, range violations, shape mismatches."""

    code = "E_VALIDATION"
    exit_code = 1


class NumericError(ThermosplatError):
    """Numerical failure: non-finite values, singular matrices, aborted runs."""

    code = "E_NUMERIC"
    exit_code = 2
