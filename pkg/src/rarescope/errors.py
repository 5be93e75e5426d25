"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class RarescopeError(Exception):
    """Base class for all errors raised by this package."""


class NotAnElf(RarescopeError):
    pass


class WrongArchitecture(RarescopeError):
    pass


class DecodeFailure(RarescopeError):
    """Raised when a byte run cannot be decoded.

    ``offset`` is relative to the start of the decoded buffer and ``partial``
    holds every instruction decoded before the failure point.
    """

    def __init__(self, offset: int, partial: tuple = (), message: str | None = None):
        self.offset = offset
        self.partial = tuple(partial)
        super().__init__(message or f"undecodable bytes at offset {offset:#x}")


class DisassemblySyntaxError(RarescopeError):
    def __init__(self, lineno: int, line: str, reason: str = "unrecognised line"):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {reason}: {line!r}")


class UnknownRegister(RarescopeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown register {name!r}")


class MixedTrackingMode(RarescopeError):
    pass


class TrackingRequired(RarescopeError):
    pass


class NoDebugInfo(RarescopeError):
    pass


class AddressOutOfRange(RarescopeError):
    def __init__(self, address: int):
        self.address = address
        super().__init__(f"address {address:#x} is outside every line-table sequence")


class BinaryNotInCorpus(RarescopeError):
    pass


class ManifestError(RarescopeError):
    pass
