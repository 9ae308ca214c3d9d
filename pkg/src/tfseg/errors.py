"""Exception hierarchy shared by all tfseg modules."""

from __future__ import annotations


class TfsegError(Exception):
    """Base class for every error raised by tfseg."""


class InvalidArgumentError(TfsegError, ValueError):
    pass


class UnsupportedBackendError(TfsegError, ValueError):
    pass


class OracleScaleExceededError(TfsegError, ValueError):
    pass


class InvalidInputError(TfsegError, ValueError):
    pass


class NoCandidatesError(TfsegError):
    """Raised when the initial gradient test selects no pixel."""


class IterationCapExceededError(TfsegError):
    pass


class ImagingError(TfsegError, OSError):
    """I/O-level failure while decoding or encoding an image or volume."""


class MalformedHeaderError(ImagingError):
    pass


class TruncatedPayloadError(ImagingError):
    def __init__(self, expected: int, actual: int, path: object = None):
        where = f" in {path}" if path is not None else ""
        super().__init__(
            f"truncated payload{where}: expected {expected} bytes, got {actual}"
        )
        self.expected = expected
        self.actual = actual


class ColorImageError(ImagingError):
    pass


class SizeMismatchError(ImagingError):
    pass


class UnknownElementTypeError(ImagingError):
    pass


class PhantomSpecError(TfsegError, ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        loc = []
        if key is not None:
            loc.append(f"key {key!r}")
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.key = key
        self.line = line
