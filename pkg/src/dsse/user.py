"""Authorized-user (HSP) role: recover a keyword's latest counter from the
server's published Bloom filter, build search tokens without contacting the
owner, and verify results client-side.

The filter is untrusted until its MAC and timestamp check out, so token
generation refuses to probe an unverified filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bloom import BloomFilter
from .crypto import chain_label, derived_key, se_decrypt, se_encrypt
from .encoding import Reader, put_bytes, put_u64
from .errors import (
    AmbiguousCounterError,
    CounterBoundError,
    FormatError,
    NotFoundError,
    StaleFilterError,
    TamperedFilterError,
)
from .owner import DEFAULT_FRESHNESS_WINDOW, DataOwner
from .protocol import Proof, SearchTokenEnvelope, VerifyReport, filter_mac, verify_result

DEFAULT_MAX_COUNTER = 2**31

_SNAPSHOT_MAGIC = b"DSSEUSR1"


@dataclass
class ProbeStats:
    """Filter probes spent on the last counter guess."""

    search_probes: int = 0
    digit_probes: int = 0
    digit_rounds: int = 0  # digit positions examined, terminator round included

    @property
    def total(self) -> int:
        return self.search_probes + self.digit_probes


@dataclass
class AuthorizedUser:
    """Holds a copy of the owner's keys plus the current group key."""

    k_prf: bytes
    k_se: bytes
    k_mac: bytes
    r: bytes
    epoch: int = 1
    max_counter: int = DEFAULT_MAX_COUNTER
    freshness_window: int = DEFAULT_FRESHNESS_WINDOW
    last_probe_stats: ProbeStats = field(default_factory=ProbeStats)

    @classmethod
    def from_owner(cls, owner: DataOwner, max_counter: int = DEFAULT_MAX_COUNTER) -> "AuthorizedUser":
        """Credential grant over the simulator's secure channel."""
        k = owner.keys
        return cls(
            k_prf=k.k_prf,
            k_se=k.k_se,
            k_mac=k.k_mac,
            r=k.r,
            epoch=k.epoch,
            max_counter=max_counter,
            freshness_window=owner.freshness_window,
        )

    def update_group_key(self, r: bytes, epoch: int) -> None:
        self.r = r
        self.epoch = epoch

    # ------------------------------------------------------------------
    # Counter recovery
    # ------------------------------------------------------------------

    def guess_counter(self, bf: BloomFilter, keyword: str) -> int | None:
        """Largest counter whose membership element is in the filter.

        If the filter carries digit embeddings for the keyword (it was
        rebuilt by a refresh), extraction gives a floor and the upward
        search starts there; otherwise it starts at 1. Returns None when
        the keyword has no trace in the filter. Probes are counted in
        last_probe_stats.
        """
        stats = ProbeStats()
        self.last_probe_stats = stats
        ambiguity = None
        try:
            base = bf.extract_counter(self.k_prf, keyword)
            # one round of 10 digit probes per position, terminator included
            rounds = 1 if base is None else len(str(base)) + 1
        except AmbiguousCounterError as exc:
            # digit collision (filter false positive): fall back to probing
            # the membership chain from 1
            base, rounds, ambiguity = None, exc.pos, exc
        stats.digit_rounds = rounds
        stats.digit_probes = 10 * rounds
        result = self._max_present(bf, keyword, base or 0, stats)
        if result is None and ambiguity is not None:
            # a refreshed filter has no membership elements below the
            # embedded floor; with the embedding unreadable the counter is
            # unrecoverable, which is not the same as "keyword absent"
            raise ambiguity
        return result

    def _max_present(
        self, bf: BloomFilter, keyword: str, base: int, stats: ProbeStats
    ) -> int | None:
        def present(c: int) -> bool:
            stats.search_probes += 1
            return bf.verify(chain_label(self.k_prf, keyword, c))

        if base >= self.max_counter:
            raise CounterBoundError(
                f"extracted floor {base} at or past bound {self.max_counter}"
            )
        if not present(base + 1):
            return base if base > 0 else None

        # exponential bracket from the known hit, then binary search
        lo = base + 1
        step = 1
        while True:
            probe = lo + step
            if probe > self.max_counter:
                if self.max_counter == lo or present(self.max_counter):
                    raise CounterBoundError(
                        f"counter still present at bound {self.max_counter}"
                    )
                probe = self.max_counter  # just verified absent
                break
            if not present(probe):
                break
            lo = probe
            step *= 2
        hi = probe
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if present(mid):
                lo = mid
            else:
                hi = mid
        return lo

    # ------------------------------------------------------------------
    # Token generation
    # ------------------------------------------------------------------

    def gen_token(
        self,
        bloom_triple: tuple[bytes, bytes, int],
        keyword: str,
        now: int,
    ) -> tuple[SearchTokenEnvelope, int]:
        """Verify the fetched filter, guess the counter, wrap the token.

        Returns (envelope, guessed counter); the counter feeds the later
        result verification. The MAC/freshness gate runs before any
        probing: a tampered or replayed filter aborts immediately.
        """
        bf_bytes, sigma, t = bloom_triple
        if filter_mac(self.k_mac, bf_bytes, t) != sigma:
            raise TamperedFilterError("published filter fails its MAC")
        if not 0 <= now - t <= self.freshness_window:
            raise StaleFilterError(f"filter timestamp {t} too old at {now}")
        try:
            bf = BloomFilter.deserialize(bf_bytes)
        except FormatError:
            raise TamperedFilterError("published filter unparseable") from None
        cnt = self.guess_counter(bf, keyword)
        if cnt is None:
            raise NotFoundError(f"keyword has no entries: {keyword!r}")
        return self.token_for_counter(keyword, cnt), cnt

    def token_for_counter(self, keyword: str, cnt: int) -> SearchTokenEnvelope:
        pair = chain_label(self.k_prf, keyword, cnt) + derived_key(
            self.k_prf, keyword, cnt
        )
        return SearchTokenEnvelope(self.epoch, se_encrypt(self.r, pair))

    # ------------------------------------------------------------------
    # Verification / decryption
    # ------------------------------------------------------------------

    def verify(
        self,
        keyword: str,
        guessed_cnt: int,
        rst: list[bytes],
        ciphertexts: list[bytes],
        proof: Proof,
        now: int,
    ) -> VerifyReport:
        """Delegated verification: all four checks are mandatory."""
        return verify_result(
            self.k_mac,
            keyword,
            guessed_cnt,
            rst,
            ciphertexts,
            proof,
            now,
            self.freshness_window,
            check_bloom=True,
        )

    def decrypt_files(self, ciphertexts: list[bytes]) -> list[bytes]:
        return [se_decrypt(self.k_se, c) for c in ciphertexts]

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def snapshot(self) -> bytes:
        buf = bytearray(_SNAPSHOT_MAGIC)
        for key in (self.k_prf, self.k_se, self.k_mac, self.r):
            put_bytes(buf, key)
        put_u64(buf, self.epoch)
        put_u64(buf, self.max_counter)
        put_u64(buf, self.freshness_window)
        return bytes(buf)

    @classmethod
    def restore(cls, data: bytes) -> "AuthorizedUser":
        if not data.startswith(_SNAPSHOT_MAGIC):
            raise FormatError("not a user snapshot", offset=0)
        r = Reader(data[len(_SNAPSHOT_MAGIC):])
        user = cls(
            k_prf=r.bytes_(),
            k_se=r.bytes_(),
            k_mac=r.bytes_(),
            r=r.bytes_(),
            epoch=r.u64(),
            max_counter=r.u64(),
            freshness_window=r.u64(),
        )
        r.expect_end()
        return user

    def save(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(self.snapshot())

    @classmethod
    def load(cls, path: str) -> "AuthorizedUser":
        with open(path, "rb") as f:
            return cls.restore(f.read())
