"""Decoder robustness: arbitrary or mutated bytes must fail cleanly with
FormatError (or decode to something re-encodable), never crash."""

import random

from dsse import wire
from dsse.bloom import BloomParams
from dsse.errors import FormatError
from dsse.owner import DataOwner
from dsse.server import CloudServer
from dsse.user import AuthorizedUser

rng = random.Random(99)


def try_decode(data: bytes) -> None:
    try:
        msg = wire.decode(data)
    except FormatError:
        return
    assert wire.encode(msg) == data  # anything accepted must round-trip


def test_wire_decode_random_bytes():
    for _ in range(3000):
        try_decode(rng.randbytes(rng.randint(0, 80)))


def test_wire_decode_mutated_valid_frames():
    owner = DataOwner.generate("full", BloomParams(0.01, 100))
    payload = owner.add_file(b"data", ["a:1", "b:2"], 1_700_000_000)
    frames = [
        wire.encode(wire.AddRequest(payload)),
        wire.encode(wire.SearchRequest(owner.gen_token("a:1"))),
        wire.encode(wire.GetBloomRequest()),
        wire.encode(wire.RotateRequest(b"\x07" * 16, 2)),
    ]
    for frame in frames:
        for _ in range(400):
            data = bytearray(frame)
            op = rng.randrange(3)
            if op == 0:
                data[rng.randrange(len(data))] ^= 1 << rng.randrange(8)
            elif op == 1:
                del data[rng.randrange(len(data))]
            else:
                data.insert(rng.randrange(len(data) + 1), rng.randrange(256))
            try_decode(bytes(data))


def test_snapshot_restore_rejects_corruption():
    owner = DataOwner.generate("full", BloomParams(0.01, 100))
    owner.add_file(b"data", ["a:1"], 1_700_000_000)
    server = CloudServer("full", BloomParams(0.01, 100), group_key=owner.keys.r)
    server.add(owner.add_file(b"more", ["a:1"], 1_700_000_600))
    user = AuthorizedUser.from_owner(owner)

    for blob, restore in (
        (owner.snapshot(), DataOwner.restore),
        (server.snapshot(), CloudServer.restore),
        (user.snapshot(), AuthorizedUser.restore),
    ):
        assert restore(blob) is not None
        for cut in range(0, len(blob), max(len(blob) // 50, 1)):
            try:
                restore(blob[:cut])
            except FormatError:
                pass
        try:
            restore(blob + b"\x00")
        except FormatError:
            pass
        try:
            restore(b"WRONGMAGIC" + blob)
        except FormatError:
            pass
