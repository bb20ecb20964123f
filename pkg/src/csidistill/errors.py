"""Exception types shared across the package."""


class FormatError(ValueError):
    """A file does not follow its declared binary or text layout."""


class TruncatedError(FormatError):
    """A binary file ended before its declared payload."""


class DataError(ValueError):
    """Input data violates a domain invariant (shapes, labels, splits)."""


class NumericError(FloatingPointError):
    """A computation produced or received non-finite values."""
