"""Protocol objects exchanged between owner, server and users, plus the
result-verification procedure both the owner and authorized users run.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .crypto import LAMBDA, aggregate_mac, mac_generate
from .errors import UsageError

BASIC = "basic"
FULL = "full"


def pack_time(t: int) -> bytes:
    """Timestamps are unix seconds, 8-byte big-endian, everywhere a MAC or
    the wire needs them."""
    return struct.pack(">Q", t)


def filter_mac(k_mac: bytes, bf_bytes: bytes, t: int) -> bytes:
    """sigma over the canonical filter serialization and its timestamp."""
    return mac_generate(k_mac, bf_bytes + pack_time(t))


def result_mac(k_mac: bytes, ciphertext: bytes, keyword: str) -> bytes:
    """Per-file tag binding an encrypted file to a keyword; XOR-aggregated
    into gamma. Binding the keyword blocks answering one keyword's query
    with another's equally sized result set."""
    return mac_generate(k_mac, ciphertext + keyword.encode("utf-8"))


@dataclass
class AddPayload:
    """One file upload: ciphertext plus its index entries.

    entries holds (tau, mu) pairs, one per distinct keyword in the file.
    sigma/t are present in full mode only (MAC over the owner's filter).
    """

    file_id: bytes
    ciphertext: bytes
    entries: list[tuple[bytes, bytes]]
    sigma: bytes | None = None
    t: int | None = None


@dataclass
class RefreshPayload:
    """Periodic filter replacement carrying only counter digit embeddings."""

    bf_bytes: bytes
    sigma: bytes
    t: int


@dataclass
class SearchTokenEnvelope:
    """Search credential for one keyword at its latest counter.

    In full mode body is an AEAD ciphertext of tau||k_cnt under the group
    key of `epoch`; in basic mode there is no group key and body is the
    raw 2*LAMBDA-byte pair (epoch is 0).
    """

    epoch: int
    body: bytes


@dataclass
class Proof:
    """Material returned with a search result for delegated verification."""

    sigma: bytes
    t: int
    bf_bytes: bytes
    gamma: bytes


@dataclass
class VerifyReport:
    """Outcome of each verification check; None means the check was skipped."""

    cardinality_ok: bool
    gamma_ok: bool
    sigma_ok: bool | None
    fresh_ok: bool | None

    @property
    def ok(self) -> bool:
        return (
            self.cardinality_ok
            and self.gamma_ok
            and self.sigma_ok is not False
            and self.fresh_ok is not False
        )


def verify_result(
    k_mac: bytes,
    keyword: str,
    cnt: int,
    rst: list[bytes],
    ciphertexts: list[bytes],
    proof: Proof,
    now: int,
    freshness_window: int,
    check_bloom: bool = True,
) -> VerifyReport:
    """Run the verification checks against a search result.

    (a) result cardinality equals the counter; (b) XOR of per-file tags
    equals the proof's gamma; (c) the proof's filter+timestamp MAC matches
    sigma; (d) the timestamp is within the freshness window. The owner,
    knowing the true counter, may skip (c)/(d) via check_bloom=False;
    delegated verification runs all four.
    """
    if len(ciphertexts) != len(rst):
        raise UsageError(
            f"{len(ciphertexts)} ciphertexts for {len(rst)} result ids"
        )
    cardinality_ok = len(rst) == cnt
    tags = [result_mac(k_mac, c, keyword) for c in ciphertexts]
    gamma_ok = aggregate_mac(tags) == proof.gamma
    sigma_ok: bool | None = None
    fresh_ok: bool | None = None
    if check_bloom:
        sigma_ok = filter_mac(k_mac, proof.bf_bytes, proof.t) == proof.sigma
        fresh_ok = 0 <= now - proof.t <= freshness_window
    return VerifyReport(cardinality_ok, gamma_ok, sigma_ok, fresh_ok)


def check_mode(mode: str) -> str:
    if mode not in (BASIC, FULL):
        raise UsageError(f"mode must be '{BASIC}' or '{FULL}', got {mode!r}")
    return mode


def mask_width(mode: str) -> int:
    """Masked-entry width: tau||key in basic mode, tau||key||gamma in full."""
    return 2 * LAMBDA if mode == BASIC else 3 * LAMBDA
