"""Shared exception types for the utep package."""


class UtepError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(UtepError):
    """Raised when array shapes are incompatible with an operation.

    The message always names both offending shapes.
    """


class NonFiniteError(UtepError):
    """Raised when a NaN or infinity enters a validated computation."""


class ConfigError(UtepError):
    """Raised for unknown, missing, or out-of-range configuration values."""


class NanAbortError(UtepError):
    """Raised when a training step produces a non-finite loss.

    Carries the path of the diagnostic dump written for the offending batch.
    """

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path
