"""Exception hierarchy shared across the package.

Errors that callers are expected to branch on get their own class; everything
else raises the closest built-in (ValueError for bad arguments at API edges,
KeyError for lookups) or a plain StatvizError.
"""

from __future__ import annotations


class StatvizError(Exception):
    """Base class for all package-specific errors."""


class TransportError(StatvizError):
    """A network-level failure that is safe to retry."""


class NotFoundError(StatvizError):
    """The remote catalog does not know the requested resource."""


class PayloadError(StatvizError):
    """A response parsed but did not match the expected shape.

    Carries the offending fragment so logs show what the server actually sent.
    """

    def __init__(self, message: str, fragment: object = None):
        super().__init__(message)
        self.fragment = fragment


class PartialFetchError(TransportError):
    """Pagination failed mid-stream; ``last_good_page`` pages were retrieved."""

    def __init__(self, message: str, last_good_page: int):
        super().__init__(message)
        self.last_good_page = last_good_page


class EmptyTableError(StatvizError):
    """An operation that needs at least one data row got none."""


class ProviderMismatchError(StatvizError):
    """A query used a different embedding provider than the one that built the index."""


class GradeSheetError(StatvizError):
    """A grade sheet failed validation (missing, extra, or non-binary answers)."""


class HarnessUnavailableError(StatvizError):
    """The execution harness did not answer the handshake."""
