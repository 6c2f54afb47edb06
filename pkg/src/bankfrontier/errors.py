"""Shared exception types.

All subclass ValueError so callers that only care about "bad input" can
catch one thing, while tests and the CLI can distinguish failure modes.
"""


class BankfrontierError(ValueError):
    """Base class for all package-raised input/data errors."""


class DimensionError(BankfrontierError):
    """Array shapes inconsistent with the declared problem dimensions."""


class InputError(BankfrontierError):
    """Non-finite or otherwise unusable numeric input."""


class SchemaError(BankfrontierError):
    """A required column or field is missing or mistyped."""


class DataError(BankfrontierError):
    """Values violate a domain requirement (signs, zeros, duplicates)."""


class CollinearityError(BankfrontierError):
    """Design matrix is rank deficient; names the offending columns."""
