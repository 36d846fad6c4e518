"""Length-prefixed binary primitives shared by the wire format and snapshots.

Every variable-length field is a 4-byte big-endian length followed by the
raw bytes; fixed-width integers are big-endian. Decoding is strict: short
reads raise FormatError with the offending offset.
"""

from __future__ import annotations

import struct

from .errors import FormatError

MAX_FIELD = 1 << 30  # sanity cap on a single length prefix (1 GiB)


def put_u8(buf: bytearray, v: int) -> None:
    buf.append(v & 0xFF)


def put_u32(buf: bytearray, v: int) -> None:
    buf += struct.pack(">I", v)


def put_u64(buf: bytearray, v: int) -> None:
    buf += struct.pack(">Q", v)


def put_bytes(buf: bytearray, b: bytes) -> None:
    if len(b) > MAX_FIELD:
        raise FormatError(f"field too large to encode: {len(b)} bytes")
    put_u32(buf, len(b))
    buf += b


def put_str(buf: bytearray, s: str) -> None:
    put_bytes(buf, s.encode("utf-8"))


class Reader:
    """Cursor over a byte string with offset-aware error reporting."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated: wanted {n} bytes, {len(self.data) - self.pos} left",
                offset=self.pos,
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def bytes_(self) -> bytes:
        at = self.pos
        n = self.u32()
        if n > MAX_FIELD:
            raise FormatError(f"length prefix too large: {n}", offset=at)
        return self._take(n)

    def str_(self) -> str:
        at = self.pos
        try:
            return self.bytes_().decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("invalid utf-8 in string field", offset=at) from None

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.pos} trailing bytes", offset=self.pos
            )
