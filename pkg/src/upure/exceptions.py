"""Exception types raised by upure."""


class UPureError(Exception):
    """Base class for all upure errors."""


class NumericDomainError(UPureError, ValueError):
    """A numeric routine was called outside the domain where it is defined."""


class PerturbationBudgetError(UPureError, RuntimeError):
    """Gaussian resampling could not exceed the requested norm within budget."""


class DatasetFormatError(UPureError, ValueError):
    """A dataset file is malformed or in an unsupported format."""


class PurificationError(UPureError):
    """Wraps a per-image failure with the ordinal of the offending image."""

    def __init__(self, ordinal, cause):
        self.ordinal = ordinal
        self.cause = cause
        super().__init__(f"image {ordinal}: {cause}")
