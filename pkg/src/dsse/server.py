"""Cloud-server role: index ingestion, chain-walking search with proof
assembly, the merged-entry search shortcut, and a configurable adversary
for verifiability testing.

The server never sees keywords. Its table maps opaque labels to masked
entries; a search token gives it one label and one key, from which it can
walk exactly one keyword's chain and nothing else.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass

from .bloom import BloomFilter, BloomParams
from .crypto import LAMBDA, ZERO, prf2, prf3, se_decrypt, xor_bytes
from .encoding import Reader, put_bytes, put_u8, put_u32, put_u64
from .errors import (
    FormatError,
    NotFoundError,
    ProtocolError,
    StaleEpochError,
    UsageError,
)
from .protocol import (
    AddPayload,
    BASIC,
    FULL,
    Proof,
    RefreshPayload,
    SearchTokenEnvelope,
    check_mode,
    mask_width,
)

ADVERSARY_BEHAVIORS = (
    "honest",
    "drop_result",
    "swap_keyword",
    "stale_bloom",
    "flip_bloom_bit",
    "forge_gamma",
)

_SNAPSHOT_MAGIC = b"DSSESRV1"


@dataclass
class ChainEntry:
    mu: bytes
    file_id: bytes


@dataclass
class MergedEntry:
    """Search result frozen under the head label after a completed walk.

    ids are newest-first. gamma is the aggregate MAC recovered from the
    head entry at merge time (full mode); a repeat search for the same
    token must still be able to hand out a verifiable proof.
    """

    ids: tuple[bytes, ...]
    gamma: bytes | None


class CloudServer:
    def __init__(
        self,
        mode: str,
        bloom_params: BloomParams | None = None,
        group_key: bytes | None = None,
        epoch: int = 1,
        delete_merged_interior: bool = False,
    ):
        self.mode = check_mode(mode)
        self.tbl: dict[bytes, ChainEntry | MergedEntry] = {}
        self.files: dict[bytes, bytes] = {}
        self.bf: BloomFilter | None = (
            BloomFilter(bloom_params or BloomParams()) if self.mode == FULL else None
        )
        self.sigma = b""
        self.t = 0
        self.r = group_key
        self.epoch = epoch
        self.delete_merged_interior = delete_merged_interior
        self.behavior = "honest"
        self.last_search_lookups = 0
        # previous results by head label, kept so the swap adversary can
        # replay another keyword's same-cardinality answer
        self._result_cache: dict[bytes, tuple[tuple[bytes, ...], bytes | None]] = {}
        self._stale_snapshot: tuple[bytes, bytes, int] | None = None
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # Ingestion
    # ------------------------------------------------------------------

    def add(self, payload: AddPayload) -> None:
        with self._lock:
            if self.mode == FULL:
                if payload.sigma is None or payload.t is None:
                    raise ProtocolError("full-mode payload missing sigma/timestamp")
                if payload.t < self.t:
                    raise ProtocolError(
                        f"non-monotonic timestamp {payload.t} < {self.t}"
                    )
            width = mask_width(self.mode)
            seen: set[bytes] = set()
            for tau, mu in payload.entries:
                if tau in self.tbl or tau in seen:
                    raise ProtocolError("duplicate index label in payload")
                seen.add(tau)
                if len(tau) != LAMBDA or len(mu) != width:
                    # catches basic/full state mixing: mask widths differ
                    raise ProtocolError(
                        f"entry sized {len(tau)}/{len(mu)}, expected {LAMBDA}/{width}"
                    )
            if payload.file_id in self.files:
                raise ProtocolError("duplicate file id")
            for tau, mu in payload.entries:
                self.tbl[tau] = ChainEntry(mu, payload.file_id)
                if self.mode == FULL:
                    self.bf.add(tau)
            self.files[payload.file_id] = payload.ciphertext
            if self.mode == FULL:
                self.sigma = payload.sigma
                self.t = payload.t

    def refresh(self, payload: RefreshPayload) -> None:
        """Adopt the owner's rebuilt filter wholesale."""
        with self._lock:
            if self.mode != FULL:
                raise UsageError("refresh applies to full mode only")
            if payload.t < self.t:
                raise ProtocolError(f"non-monotonic timestamp {payload.t} < {self.t}")
            self.bf = BloomFilter.deserialize(payload.bf_bytes)
            self.sigma = payload.sigma
            self.t = payload.t

    def set_group_key(self, r: bytes, epoch: int) -> None:
        with self._lock:
            if self.mode != FULL:
                raise UsageError("group keys exist only in full mode")
            if epoch <= self.epoch:
                raise ProtocolError(f"epoch must increase: {epoch} <= {self.epoch}")
            self.r = r
            self.epoch = epoch

    # ------------------------------------------------------------------
    # Search
    # ------------------------------------------------------------------

    def _open_token(self, envelope: SearchTokenEnvelope) -> tuple[bytes, bytes]:
        if self.mode == FULL:
            if envelope.epoch != self.epoch:
                raise StaleEpochError(
                    f"token epoch {envelope.epoch}, current {self.epoch}"
                )
            pair = se_decrypt(self.r, envelope.body)
        else:
            pair = envelope.body
        if len(pair) != 2 * LAMBDA:
            raise ProtocolError(f"token body is {len(pair)} bytes, expected {2*LAMBDA}")
        return pair[:LAMBDA], pair[LAMBDA:]

    def search(self, envelope: SearchTokenEnvelope) -> tuple[list[bytes], Proof | None]:
        """Walk one keyword's chain from its newest entry.

        Collects file ids newest-first, stopping at the zero key or at a
        previously merged entry. Afterwards the head label is rewritten as
        a merged entry so the next search for the same token costs one
        lookup plus one per entry added since.
        """
        with self._lock:
            tau_head, key = self._open_token(envelope)
            mask = prf3 if self.mode == FULL else prf2

            ids: list[bytes] = []
            gamma_head: bytes | None = None
            tau, k = tau_head, key
            lookups = 0
            visited: list[bytes] = []
            while True:
                entry = self.tbl.get(tau)
                if entry is None:
                    if lookups == 0:
                        raise NotFoundError("unknown index label in token")
                    raise ProtocolError("chain broken: interior label missing")
                lookups += 1
                visited.append(tau)
                if isinstance(entry, MergedEntry):
                    ids.extend(entry.ids)
                    if gamma_head is None:
                        gamma_head = entry.gamma
                    break
                ids.append(entry.file_id)
                opened = xor_bytes(entry.mu, mask(k, tau))
                tau_prev = opened[:LAMBDA]
                k_prev = opened[LAMBDA : 2 * LAMBDA]
                if self.mode == FULL and gamma_head is None:
                    gamma_head = opened[2 * LAMBDA :]
                if k_prev == ZERO:
                    break
                tau, k = tau_prev, k_prev
            self.last_search_lookups = lookups

            honest_ids = tuple(ids)
            self.tbl[tau_head] = MergedEntry(honest_ids, gamma_head)
            if self.delete_merged_interior:
                for label in visited:
                    if label != tau_head:
                        del self.tbl[label]
            self._result_cache[tau_head] = (honest_ids, gamma_head)

            out_ids, out_gamma = self._apply_result_adversary(
                tau_head, honest_ids, gamma_head
            )
            proof = None
            if self.mode == FULL:
                bf_bytes, sigma, t = self._bloom_triple()
                proof = Proof(sigma, t, bf_bytes, out_gamma)
            return list(out_ids), proof

    def ciphertexts_for(self, ids: list[bytes]) -> list[bytes]:
        with self._lock:
            try:
                return [self.files[i] for i in ids]
            except KeyError:
                raise NotFoundError("unknown file id") from None

    # ------------------------------------------------------------------
    # Filter publication
    # ------------------------------------------------------------------

    def get_bloom(self) -> tuple[bytes, bytes, int]:
        """Current (serialized filter, sigma, timestamp) triple, subject to
        the configured adversarial behavior."""
        with self._lock:
            if self.mode != FULL:
                raise UsageError("no published filter in basic mode")
            return self._bloom_triple()

    def _bloom_triple(self) -> tuple[bytes, bytes, int]:
        if self.behavior == "stale_bloom" and self._stale_snapshot is not None:
            return self._stale_snapshot
        bf_bytes = self.bf.serialize()
        if self.behavior == "flip_bloom_bit":
            flipped = bytearray(bf_bytes)
            flipped[8] ^= 0x01  # first bit of the bit array; sigma untouched
            bf_bytes = bytes(flipped)
        return bf_bytes, self.sigma, self.t

    # ------------------------------------------------------------------
    # Adversary control (test double)
    # ------------------------------------------------------------------

    def set_adversary(self, behavior: str) -> None:
        """Corrupt subsequent responses. stale_bloom freezes the current
        (filter, sigma, timestamp) and keeps serving it; arm it, ingest past
        the freshness window, then query."""
        with self._lock:
            if behavior not in ADVERSARY_BEHAVIORS:
                raise UsageError(f"unknown behavior {behavior!r}")
            self.behavior = behavior
            if behavior == "stale_bloom":
                if self.mode != FULL:
                    raise UsageError("stale_bloom applies to full mode only")
                self._stale_snapshot = (self.bf.serialize(), self.sigma, self.t)
            else:
                self._stale_snapshot = None

    def _apply_result_adversary(
        self, tau_head: bytes, ids: tuple[bytes, ...], gamma: bytes | None
    ) -> tuple[tuple[bytes, ...], bytes | None]:
        if self.behavior == "drop_result":
            return ids[1:], gamma
        if self.behavior == "forge_gamma":
            return ids, secrets.token_bytes(LAMBDA)
        if self.behavior == "swap_keyword":
            for other_tau, (other_ids, other_gamma) in self._result_cache.items():
                if other_tau != tau_head and len(other_ids) == len(ids):
                    return other_ids, other_gamma
        return ids, gamma

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def snapshot(self) -> bytes:
        with self._lock:
            buf = bytearray(_SNAPSHOT_MAGIC)
            put_u8(buf, 1 if self.mode == FULL else 0)
            put_u8(buf, 1 if self.r is not None else 0)
            if self.r is not None:
                put_bytes(buf, self.r)
            put_u64(buf, self.epoch)
            put_u8(buf, 1 if self.delete_merged_interior else 0)
            put_bytes(buf, self.sigma)
            put_u64(buf, self.t)
            put_u8(buf, 1 if self.bf is not None else 0)
            if self.bf is not None:
                put_bytes(buf, self.bf.serialize())
            put_u64(buf, len(self.tbl))
            for tau in sorted(self.tbl):
                entry = self.tbl[tau]
                put_bytes(buf, tau)
                if isinstance(entry, ChainEntry):
                    put_u8(buf, 1)
                    put_bytes(buf, entry.mu)
                    put_bytes(buf, entry.file_id)
                else:
                    put_u8(buf, 0)
                    put_u32(buf, len(entry.ids))
                    for fid in entry.ids:
                        put_bytes(buf, fid)
                    put_u8(buf, 1 if entry.gamma is not None else 0)
                    if entry.gamma is not None:
                        put_bytes(buf, entry.gamma)
            put_u64(buf, len(self.files))
            for fid in sorted(self.files):
                put_bytes(buf, fid)
                put_bytes(buf, self.files[fid])
            return bytes(buf)

    @classmethod
    def restore(cls, data: bytes) -> "CloudServer":
        if not data.startswith(_SNAPSHOT_MAGIC):
            raise FormatError("not a server snapshot", offset=0)
        r = Reader(data[len(_SNAPSHOT_MAGIC):])
        mode = FULL if r.u8() else BASIC
        group_key = r.bytes_() if r.u8() else None
        epoch = r.u64()
        delete_merged = bool(r.u8())
        server = cls(
            mode,
            # placeholder filter; the snapshot's own bytes replace it below
            bloom_params=BloomParams(0.5, 1),
            group_key=group_key,
            epoch=epoch,
            delete_merged_interior=delete_merged,
        )
        server.sigma = r.bytes_()
        server.t = r.u64()
        if r.u8():
            server.bf = BloomFilter.deserialize(r.bytes_())
        else:
            server.bf = None
        for _ in range(r.u64()):
            tau = r.bytes_()
            if r.u8():
                server.tbl[tau] = ChainEntry(r.bytes_(), r.bytes_())
            else:
                ids = tuple(r.bytes_() for _ in range(r.u32()))
                gamma = r.bytes_() if r.u8() else None
                server.tbl[tau] = MergedEntry(ids, gamma)
        for _ in range(r.u64()):
            fid = r.bytes_()
            server.files[fid] = r.bytes_()
        r.expect_end()
        return server

    def save(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(self.snapshot())

    @classmethod
    def load(cls, path: str) -> "CloudServer":
        with open(path, "rb") as f:
            return cls.restore(f.read())
