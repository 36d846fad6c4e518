import random

import pytest

from dsse import crypto
from dsse.bloom import BloomParams
from dsse.errors import NotFoundError, UsageError
from dsse.owner import DataOwner
from dsse.protocol import filter_mac, result_mac

NOW = 1_700_000_000
PARAMS = BloomParams(2.0**-30, 5000)


def fresh(mode="full"):
    return DataOwner.generate(mode, PARAMS)


def test_generate_independent_keys_and_empty_state():
    a, b = fresh(), fresh()
    assert a.keys.k_prf != b.keys.k_prf
    assert a.tbl == {}
    assert a.keys.epoch == 1
    assert fresh("basic").bf is None


def test_add_file_validations():
    owner = fresh()
    with pytest.raises(UsageError):
        owner.add_file(b"data", [], NOW)
    with pytest.raises(UsageError):
        owner.add_file(b"data", ["w", "w"], NOW)
    with pytest.raises(UsageError):
        owner.add_file(b"data", ["ok", ""], NOW)
    with pytest.raises(UsageError):
        owner.add_file(b"", ["w"], NOW)


def test_first_entry_chains_to_zero_key():
    # the first entry for a keyword masks (tau_0, zero key): unmasking it
    # terminates the chain walk
    owner = fresh()
    payload = owner.add_file(b"f1", ["heartbeat:75"], NOW)
    (tau, mu), = payload.entries
    k = owner.keys
    assert tau == crypto.chain_label(k.k_prf, "heartbeat:75", 1)
    opened = crypto.xor_bytes(mu, crypto.prf3(crypto.derived_key(k.k_prf, "heartbeat:75", 1), tau))
    assert opened[:16] == crypto.chain_label(k.k_prf, "heartbeat:75", 0)
    assert opened[16:32] == b"\x00" * 16
    assert opened[32:] == result_mac(k.k_mac, payload.ciphertext, "heartbeat:75")


def test_second_entry_unmasks_to_first():
    owner = fresh()
    owner.add_file(b"f1", ["w"], NOW)
    payload2 = owner.add_file(b"f2", ["w"], NOW + 600)
    (tau2, mu2), = payload2.entries
    k = owner.keys
    assert tau2 == crypto.chain_label(k.k_prf, "w", 2)
    opened = crypto.xor_bytes(mu2, crypto.prf3(crypto.derived_key(k.k_prf, "w", 2), tau2))
    assert opened[:16] == crypto.chain_label(k.k_prf, "w", 1)
    assert opened[16:32] == crypto.derived_key(k.k_prf, "w", 1)
    assert opened[32:] == owner.tbl["w"].gamma


def test_basic_mode_mask_is_two_lambda():
    owner = fresh("basic")
    p1 = owner.add_file(b"f1", ["w"], NOW)
    (tau, mu), = p1.entries
    assert len(mu) == 32
    assert p1.sigma is None and p1.t is None
    k = owner.keys
    opened = crypto.xor_bytes(mu, crypto.prf2(crypto.derived_key(k.k_prf, "w", 1), tau))
    assert opened[:16] == crypto.chain_label(k.k_prf, "w", 0)
    assert opened[16:] == b"\x00" * 16


def test_entry_count_matches_keyword_count():
    owner = fresh()
    kws = [f"attr{i}:v" for i in range(15)]
    payload = owner.add_file(b"f", kws, NOW)
    assert len(payload.entries) == 15
    assert len({tau for tau, _ in payload.entries}) == 15


def test_counters_match_plaintext_index():
    owner = fresh()
    rng = random.Random(7)
    truth: dict[str, int] = {}
    for i in range(100):
        kws = {f"kw:{rng.randint(0, 20)}" for _ in range(5)}
        owner.add_file(f"f{i}".encode(), kws, NOW + i)
        for w in kws:
            truth[w] = truth.get(w, 0) + 1
    assert {w: rec.cnt for w, rec in owner.tbl.items()} == truth


def test_gamma_recomputable_from_ciphertexts():
    owner = fresh()
    cts = []
    for i in range(5):
        payload = owner.add_file(f"f{i}".encode(), ["w"], NOW + i)
        cts.append(payload.ciphertext)
        tags = [result_mac(owner.keys.k_mac, c, "w") for c in cts]
        assert owner.tbl["w"].gamma == crypto.aggregate_mac(tags)


def test_sigma_covers_current_filter_and_timestamp():
    owner = fresh()
    payload = owner.add_file(b"f", ["w"], NOW)
    assert payload.t == NOW
    assert payload.sigma == filter_mac(owner.keys.k_mac, owner.bf.serialize(), NOW)


def test_gen_token_owner_contents():
    owner = fresh()
    for i in range(3):
        owner.add_file(f"f{i}".encode(), ["w"], NOW + i)
    env = owner.gen_token("w")
    assert env.epoch == 1
    pair = crypto.se_decrypt(owner.keys.r, env.body)
    assert pair[:16] == crypto.chain_label(owner.keys.k_prf, "w", 3)
    assert pair[16:] == crypto.derived_key(owner.keys.k_prf, "w", 3)


def test_gen_token_unknown_keyword():
    with pytest.raises(NotFoundError):
        fresh().gen_token("missing")


def test_basic_token_is_plain_pair():
    owner = fresh("basic")
    owner.add_file(b"f", ["w"], NOW)
    env = owner.gen_token("w")
    assert env.epoch == 0
    assert env.body == crypto.chain_label(owner.keys.k_prf, "w", 1) + crypto.derived_key(
        owner.keys.k_prf, "w", 1
    )


def test_rotate_increments_epoch():
    owner = fresh()
    r1, e1 = owner.rotate_group_key()
    r2, e2 = owner.rotate_group_key()
    assert (e1, e2) == (2, 3)
    assert r1 != r2
    with pytest.raises(UsageError):
        fresh("basic").rotate_group_key()


def test_refresh_embeds_current_counters():
    owner = fresh()
    for i in range(456):
        owner.add_file(f"f{i}".encode(), ["w", f"other:{i % 3}"], NOW + i)
    payload = owner.refresh_bloom(NOW + 1000)
    # one element per decimal digit of each keyword's counter
    expected = sum(len(str(rec.cnt)) for rec in owner.tbl.values())
    assert owner.bf.n_inserted == expected
    assert owner.bf.extract_counter(owner.keys.k_prf, "w") == 456
    assert owner.last_refresh == NOW + 1000
    assert payload.sigma == filter_mac(owner.keys.k_mac, payload.bf_bytes, NOW + 1000)
    # the next upload appends its membership element to the refreshed filter
    owner.add_file(b"more", ["w"], NOW + 1600)
    assert owner.bf.verify(crypto.chain_label(owner.keys.k_prf, "w", 457))
    assert owner.bf.n_inserted == expected + 1


def test_gamma_continuous_across_refresh():
    owner = fresh()
    owner.add_file(b"f1", ["w"], NOW)
    gamma_before = owner.tbl["w"].gamma
    owner.refresh_bloom(NOW + 600)
    assert owner.tbl["w"].gamma == gamma_before


def test_snapshot_round_trip(tmp_path):
    owner = fresh()
    for i in range(20):
        owner.add_file(f"f{i}".encode(), {f"kw:{i % 4}", "shared:1"}, NOW + i)
    owner.refresh_bloom(NOW + 100)
    owner.add_file(b"post", ["shared:1"], NOW + 200)
    path = tmp_path / "owner.bin"
    owner.save(str(path))
    back = DataOwner.load(str(path))
    assert back.mode == owner.mode
    assert back.keys == owner.keys
    assert back.tbl == owner.tbl
    assert back.bf == owner.bf
    assert back.last_refresh == owner.last_refresh
    # the restored owner continues the chain identically
    token_a = owner.gen_token("shared:1")
    token_b = back.gen_token("shared:1")
    assert crypto.se_decrypt(owner.keys.r, token_a.body) == crypto.se_decrypt(
        back.keys.r, token_b.body
    )
