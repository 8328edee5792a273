"""Exception types shared across the package.

The CLI maps EmbexError to exit code 2 (bad input or usage) and
NothingExtractedError to exit code 1.
"""


class EmbexError(Exception):
    """Base class for all errors raised by this package."""


class ManifestError(EmbexError, ValueError):
    """An image listing is empty, inconsistent, or points at missing files."""


class BackboneError(EmbexError, ValueError):
    """Unknown backbone name or unusable weights."""


class NothingExtractedError(EmbexError):
    """Every listed image was undecodable, so no output was written."""
