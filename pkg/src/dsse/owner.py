"""Data-owner (IoT gateway) role: index construction, token generation,
result verification, group-key rotation and the periodic filter refresh.

The owner keeps one counter per keyword. Each file upload appends, per
keyword, a fresh index entry whose label tau is a PRF of (keyword, counter)
and whose masked body links back to the previous counter's entry, so the
server can walk a keyword's whole history from the newest entry without
ever seeing two linkable labels.

DataOwner is single-writer: one gateway thread calls add_file / refresh /
rotate; token generation and verification are read-only.
"""

from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass

from .bloom import BloomFilter, BloomParams
from .crypto import (
    KeyBundle,
    ZERO,
    chain_label,
    derived_key,
    prf2,
    prf3,
    se_encrypt,
    xor_bytes,
)
from .encoding import Reader, put_bytes, put_str, put_u8, put_u64
from .errors import FormatError, NotFoundError, UsageError
from .protocol import (
    AddPayload,
    BASIC,
    FULL,
    Proof,
    RefreshPayload,
    SearchTokenEnvelope,
    check_mode,
    filter_mac,
    result_mac,
    verify_result,
    VerifyReport,
)

DEFAULT_FRESHNESS_WINDOW = 1200  # two 10-minute upload periods

_SNAPSHOT_MAGIC = b"DSSEOWN1"


@dataclass
class KeywordRecord:
    cnt: int
    gamma: bytes | None  # aggregate MAC over this keyword's files (full mode)


class DataOwner:
    def __init__(
        self,
        mode: str,
        keys: KeyBundle,
        bloom_params: BloomParams | None = None,
        freshness_window: int = DEFAULT_FRESHNESS_WINDOW,
    ):
        self.mode = check_mode(mode)
        self.keys = keys
        self.freshness_window = freshness_window
        self.tbl: dict[str, KeywordRecord] = {}
        self.bloom_params = bloom_params or BloomParams()
        self.bf: BloomFilter | None = (
            BloomFilter(self.bloom_params) if self.mode == FULL else None
        )
        self.last_refresh = 0

    @classmethod
    def generate(
        cls,
        mode: str,
        bloom_params: BloomParams | None = None,
        freshness_window: int = DEFAULT_FRESHNESS_WINDOW,
    ) -> "DataOwner":
        """Fresh keys, empty state."""
        return cls(mode, KeyBundle.generate(), bloom_params, freshness_window)

    # ------------------------------------------------------------------
    # AddFile
    # ------------------------------------------------------------------

    def add_file(
        self,
        plaintext: bytes,
        keywords: set[str] | list[str],
        now: int,
        emit_filter_mac: bool = True,
    ) -> AddPayload:
        """Encrypt one file and build its index entries.

        Keywords must be distinct and non-empty. Entry order inside the
        payload is sorted by keyword for reproducibility; the server's
        table is unordered anyway.

        emit_filter_mac=False skips only the final MAC over the filter
        (state mutations are identical); such a payload is not uploadable
        in full mode and exists for owner-state simulations that never
        talk to a server.
        """
        kws = sorted(keywords)
        if not kws:
            raise UsageError("file must contain at least one keyword")
        if len(kws) != len(set(kws)):
            raise UsageError("duplicate keywords in input")
        if any(not w for w in kws):
            raise UsageError("empty keyword string")
        if not plaintext:
            raise UsageError("empty file")

        k = self.keys
        ciphertext = se_encrypt(k.k_se, plaintext)
        file_id = secrets.token_bytes(16)
        entries: list[tuple[bytes, bytes]] = []

        for w in kws:
            rec = self.tbl.get(w)
            if rec is None:
                cnt_prev, k_prev, gamma_prev = 0, ZERO, ZERO
                cnt = 1
            else:
                cnt_prev = rec.cnt
                k_prev = derived_key(k.k_prf, w, cnt_prev)
                gamma_prev = rec.gamma if rec.gamma is not None else ZERO
                cnt = rec.cnt + 1

            tau = chain_label(k.k_prf, w, cnt)
            tau_prev = chain_label(k.k_prf, w, cnt_prev)
            k_cnt = derived_key(k.k_prf, w, cnt)

            if self.mode == FULL:
                gamma = xor_bytes(gamma_prev, result_mac(k.k_mac, ciphertext, w))
                mu = xor_bytes(tau_prev + k_prev + gamma, prf3(k_cnt, tau))
                self.bf.add(tau)
                self.tbl[w] = KeywordRecord(cnt, gamma)
            else:
                mu = xor_bytes(tau_prev + k_prev, prf2(k_cnt, tau))
                self.tbl[w] = KeywordRecord(cnt, None)
            entries.append((tau, mu))

        sigma = t = None
        if self.mode == FULL and emit_filter_mac:
            sigma = filter_mac(k.k_mac, self.bf.serialize(), now)
            t = now
        return AddPayload(file_id, ciphertext, entries, sigma, t)

    # ------------------------------------------------------------------
    # GenToken / SSEVerify
    # ------------------------------------------------------------------

    def gen_token(self, keyword: str) -> SearchTokenEnvelope:
        """Token for the keyword's latest counter.

        Full mode wraps tau||k_cnt under the group key so the token itself
        proves membership in the current epoch; basic mode sends the pair
        in the clear (there is no delegation to protect)."""
        rec = self.tbl.get(keyword)
        if rec is None:
            raise NotFoundError(f"keyword never added: {keyword!r}")
        return self.token_for_counter(keyword, rec.cnt)

    def token_for_counter(self, keyword: str, cnt: int) -> SearchTokenEnvelope:
        k = self.keys
        pair = chain_label(k.k_prf, keyword, cnt) + derived_key(k.k_prf, keyword, cnt)
        if self.mode == FULL:
            return SearchTokenEnvelope(k.epoch, se_encrypt(k.r, pair))
        return SearchTokenEnvelope(0, pair)

    def verify(
        self,
        keyword: str,
        rst: list[bytes],
        ciphertexts: list[bytes],
        proof: Proof,
        now: int,
        check_bloom: bool = True,
    ) -> VerifyReport:
        """Check a search result against the owner's own counter.

        The owner knows the true counter, so the filter/freshness checks
        are optional; they stay on by default."""
        if self.mode != FULL:
            raise UsageError("no proofs to verify in basic mode")
        rec = self.tbl.get(keyword)
        if rec is None:
            raise NotFoundError(f"keyword never added: {keyword!r}")
        return verify_result(
            self.keys.k_mac,
            keyword,
            rec.cnt,
            rst,
            ciphertexts,
            proof,
            now,
            self.freshness_window,
            check_bloom=check_bloom,
        )

    # ------------------------------------------------------------------
    # Group key rotation / filter refresh
    # ------------------------------------------------------------------

    def rotate_group_key(self) -> tuple[bytes, int]:
        """New group key and epoch, for delivery to the server and to every
        user that stays authorized."""
        if self.mode != FULL:
            raise UsageError("group keys exist only in full mode")
        self.keys.rotate()
        return self.keys.r, self.keys.epoch

    def refresh_bloom(self, now: int) -> RefreshPayload:
        """Rebuild the filter with only digit embeddings of current counters.

        Membership entries restart from the current counters, so the filter
        stops growing with history; gamma chains are untouched."""
        if self.mode != FULL:
            raise UsageError("refresh applies to full mode only")
        bf = BloomFilter(self.bloom_params)
        for w, rec in self.tbl.items():
            bf.embed_counter(self.keys.k_prf, w, rec.cnt)
        self.bf = bf
        self.last_refresh = now
        bf_bytes = bf.serialize()
        return RefreshPayload(bf_bytes, filter_mac(self.keys.k_mac, bf_bytes, now), now)

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def snapshot(self) -> bytes:
        buf = bytearray(_SNAPSHOT_MAGIC)
        put_u8(buf, 1 if self.mode == FULL else 0)
        for key in (self.keys.k_prf, self.keys.k_se, self.keys.k_mac, self.keys.r):
            put_bytes(buf, key)
        put_u64(buf, self.keys.epoch)
        put_u64(buf, self.last_refresh)
        put_u64(buf, self.freshness_window)
        buf += struct.pack(">d", self.bloom_params.target_fp)
        put_u64(buf, self.bloom_params.capacity)
        put_u64(buf, len(self.tbl))
        for w in sorted(self.tbl):
            rec = self.tbl[w]
            put_str(buf, w)
            put_u64(buf, rec.cnt)
            put_u8(buf, 1 if rec.gamma is not None else 0)
            if rec.gamma is not None:
                put_bytes(buf, rec.gamma)
        put_u8(buf, 1 if self.bf is not None else 0)
        if self.bf is not None:
            put_bytes(buf, self.bf.serialize())
        return bytes(buf)

    @classmethod
    def restore(cls, data: bytes) -> "DataOwner":
        if not data.startswith(_SNAPSHOT_MAGIC):
            raise FormatError("not an owner snapshot", offset=0)
        r = Reader(data[len(_SNAPSHOT_MAGIC):])
        mode = FULL if r.u8() else BASIC
        k_prf, k_se, k_mac, gk = r.bytes_(), r.bytes_(), r.bytes_(), r.bytes_()
        epoch = r.u64()
        last_refresh = r.u64()
        freshness = r.u64()
        target_fp = struct.unpack(">d", r._take(8))[0]
        capacity = r.u64()
        params = BloomParams(target_fp, capacity)
        keys = KeyBundle(k_prf, k_se, k_mac, gk, epoch)
        owner = cls(mode, keys, params, freshness)
        owner.last_refresh = last_refresh
        for _ in range(r.u64()):
            w = r.str_()
            cnt = r.u64()
            gamma = r.bytes_() if r.u8() else None
            owner.tbl[w] = KeywordRecord(cnt, gamma)
        if r.u8():
            owner.bf = BloomFilter.deserialize(r.bytes_())
        else:
            owner.bf = None
        r.expect_end()
        return owner

    def save(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(self.snapshot())

    @classmethod
    def load(cls, path: str) -> "DataOwner":
        with open(path, "rb") as f:
            return cls.restore(f.read())
