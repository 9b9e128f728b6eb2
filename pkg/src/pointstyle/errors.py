"""Exception types shared across the package."""


class PointStyleError(Exception):
    """Base class for all errors raised by this package."""


class ManifestError(PointStyleError):
    """Scene manifest is missing, malformed, or references bad data."""


class FormatError(PointStyleError):
    """A binary container is corrupt, truncated, or has the wrong magic."""


class ValidationError(PointStyleError):
    """An in-memory object violates one of its invariants."""


class MetricUndefinedError(PointStyleError):
    """A metric was requested over an empty valid-pixel set."""
