"""Exception hierarchy shared by all protocol roles."""


class DsseError(Exception):
    """Base class for every error raised by this package."""


class UsageError(DsseError):
    """Caller violated a precondition (bad key length, empty keyword, ...)."""


class DecryptionError(DsseError):
    """Authenticated decryption failed (tampered or mismatched ciphertext)."""


class FormatError(DsseError):
    """Malformed serialized data. Carries the byte offset where decoding failed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class ProtocolError(DsseError):
    """Peer sent something inconsistent with the protocol state."""


class StaleEpochError(ProtocolError):
    """Search token was wrapped under a superseded group key epoch."""


class NotFoundError(DsseError):
    """Requested keyword or index label does not exist."""


class TamperedFilterError(DsseError):
    """Fetched Bloom filter failed its MAC check."""


class StaleFilterError(DsseError):
    """Fetched Bloom filter's timestamp is older than the freshness window."""


class AmbiguousCounterError(DsseError):
    """Two or more digits matched at one position while extracting a counter."""

    def __init__(self, message: str, pos: int = 1):
        super().__init__(message)
        self.pos = pos


class CounterBoundError(DsseError):
    """Counter search hit the configured upper bound while still finding hits."""


class TransportError(DsseError):
    """Connection-level failure, distinct from any protocol-level error."""
