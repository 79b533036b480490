"""Exception types shared across the package."""

from __future__ import annotations


class CtiRagError(Exception):
    """Base class for all package errors."""


class ContractError(CtiRagError, ValueError):
    """An input violates a documented precondition or invariant."""


class RecordError(CtiRagError, ValueError):
    """A malformed record in a JSONL input file."""

    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class IndexFormatError(CtiRagError, ValueError):
    """A persisted index could not be loaded."""


class TransportError(CtiRagError):
    """A remote service call failed.

    ``retry_after`` carries the server's Retry-After hint in seconds, when
    one was sent.
    """

    def __init__(self, message: str, *, retry_after: float | None = None,
                 status_code: int | None = None):
        super().__init__(message)
        self.retry_after = retry_after
        self.status_code = status_code
