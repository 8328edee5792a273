"""Exception types shared across the package.

The CLI maps every HashReidError to exit code 2 (bad input or usage);
selftest assertion failures use exit code 1.
"""


class HashReidError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(HashReidError):
    """A file does not follow the expected binary or text layout."""


class TruncatedFileError(HashReidError):
    """A file ended before the declared payload was complete."""


class ValidationError(HashReidError, ValueError):
    """An in-memory value violates a documented precondition."""


class ShapeError(ValidationError):
    """Array dimensions are inconsistent with each other."""


class SamplingError(HashReidError, ValueError):
    """A batch request cannot be satisfied by the dataset."""


class ConfigError(HashReidError, ValueError):
    """A config file contains an unknown key or an unparsable value."""


class OptimizerError(HashReidError):
    """Optimization hit a non-finite gradient or loss."""


class SingularSystemError(HashReidError):
    """A linear system has no unique solution."""
