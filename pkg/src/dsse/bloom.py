"""Bit-array Bloom filter with canonical serialization and counter embedding.

The serialized form (m || k || bit bytes) is normative: it is the direct
input to the filter-integrity MAC, so two filters built from the same add
multiset must serialize byte-identically. The k index functions come from
one hash of the element with distinct one-byte suffixes, reduced mod m;
there is no per-filter salt, which keeps the owner's and server's filters
bit-synchronized.

Counter embedding stores a keyword's latest counter as one filter element
per decimal digit (position 1 = least significant); extraction probes each
position's ten digits until a position has no hit.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

from .crypto import digit_element
from .errors import AmbiguousCounterError, FormatError, UsageError

_HEADER = struct.Struct(">II")
_MAX_DIGIT_POSITIONS = 20  # 10^20 > 2^64; more positions means a corrupt filter


@dataclass(frozen=True)
class BloomParams:
    """Sizing inputs: target false-positive probability and expected load."""

    target_fp: float = 2.0**-30
    capacity: int = 1_000_000

    def derive(self) -> tuple[int, int]:
        """Return (m bits, k hash functions) for the optimal-k sizing rule."""
        if not 0.0 < self.target_fp < 1.0:
            raise UsageError(f"target_fp must be in (0,1), got {self.target_fp}")
        if self.capacity < 1:
            raise UsageError(f"capacity must be >= 1, got {self.capacity}")
        k = math.ceil(-math.log2(self.target_fp))
        m = math.ceil(self.capacity * k / math.log(2))
        return m, k


def expected_fp_rate(m: int, k: int, n: int) -> float:
    """(1 - e^(-kn/m))^k for n inserted elements."""
    return (1.0 - math.exp(-k * n / m)) ** k


class BloomFilter:
    def __init__(self, params: BloomParams):
        m, k = params.derive()
        self.m = m
        self.k = k
        self.bits = bytearray((m + 7) // 8)
        self.n_inserted = 0

    @classmethod
    def _from_raw(cls, m: int, k: int, bits: bytearray) -> "BloomFilter":
        bf = cls.__new__(cls)
        bf.m = m
        bf.k = k
        bf.bits = bits
        bf.n_inserted = 0
        return bf

    def _indexes(self, element: bytes) -> list[int]:
        m = self.m
        return [
            int.from_bytes(hashlib.sha256(element + bytes([i])).digest(), "big") % m
            for i in range(self.k)
        ]

    def add(self, element: bytes) -> None:
        bits = self.bits
        for idx in self._indexes(element):
            bits[idx >> 3] |= 1 << (idx & 7)
        self.n_inserted += 1

    def verify(self, element: bytes) -> bool:
        bits = self.bits
        for idx in self._indexes(element):
            if not bits[idx >> 3] & (1 << (idx & 7)):
                return False
        return True

    def __contains__(self, element: bytes) -> bool:
        return self.verify(element)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return self.m == other.m and self.k == other.k and self.bits == other.bits

    def popcount(self) -> int:
        return sum(bin(b).count("1") for b in self.bits)

    # -- canonical serialization -------------------------------------------

    def serialize(self) -> bytes:
        """m(4 BE) || k(4 BE) || ceil(m/8) bit bytes, bit i at byte i//8, LSB-first."""
        return _HEADER.pack(self.m, self.k) + bytes(self.bits)

    @classmethod
    def deserialize(cls, data: bytes) -> "BloomFilter":
        if len(data) < _HEADER.size:
            raise FormatError("bloom header truncated", offset=len(data))
        m, k = _HEADER.unpack_from(data)
        if m < 1 or k < 1:
            raise FormatError(f"bad bloom header m={m} k={k}", offset=0)
        want = (m + 7) // 8
        body = data[_HEADER.size :]
        if len(body) != want:
            raise FormatError(
                f"bloom body has {len(body)} bytes, expected {want}",
                offset=_HEADER.size,
            )
        return cls._from_raw(m, k, bytearray(body))

    # -- counter digit embedding (periodic-refresh support) -----------------

    def embed_counter(self, k_prf: bytes, keyword: str, counter: int) -> None:
        """Add one element per decimal digit of counter (pos 1 = least significant)."""
        if counter < 1:
            raise UsageError(f"cannot embed counter {counter}")
        pos = 1
        while counter > 0:
            counter, digit = divmod(counter, 10)
            self.add(digit_element(k_prf, keyword, pos, digit))
            pos += 1

    def extract_counter(self, k_prf: bytes, keyword: str) -> int | None:
        """Recover an embedded counter, or None if position 1 has no digit.

        A position with two or more hits is a false-positive collision; we
        refuse to guess and raise AmbiguousCounterError so the caller can
        fall back to probing from 1.
        """
        value = 0
        scale = 1
        for pos in range(1, _MAX_DIGIT_POSITIONS + 2):
            hits = [
                d for d in range(10)
                if self.verify(digit_element(k_prf, keyword, pos, d))
            ]
            if not hits:
                return value if pos > 1 else None
            if len(hits) > 1:
                raise AmbiguousCounterError(
                    f"digits {hits} all present at position {pos} for keyword",
                    pos=pos,
                )
            value += hits[0] * scale
            scale *= 10
        raise FormatError(
            f"counter embedding exceeds {_MAX_DIGIT_POSITIONS} digit positions"
        )
