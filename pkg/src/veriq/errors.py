"""Shared exception taxonomy.

ValidationError covers malformed input files and schema violations;
NumericError covers degenerate data and failed numeric procedures.
The CLI maps them to distinct exit codes.
"""


class ValidationError(ValueError):
    """Input data violates the declared schema or a precondition."""


class NumericError(RuntimeError):
    """A numeric procedure failed or the data is degenerate for it."""
