import itertools

import numpy as np
import pytest

from ffield import get_modulus
from shamir import Share, public_point
from sscrypto import (
    AuthenticationError,
    KeyDerivationError,
    NonceLedger,
    NonceReuseError,
    SealError,
    SealedShare,
    derive_pairwise_key,
    derive_self_key,
    open_share,
    seal_share,
)

MASTER = bytes(range(16))


def share_for(node, value):
    field = get_modulus()
    return Share(public_point(node, field), field.element(value))


def test_pairwise_keys_are_symmetric_and_deterministic():
    assert derive_pairwise_key(MASTER, 3, 9) == derive_pairwise_key(MASTER, 9, 3)
    assert derive_pairwise_key(MASTER, 3, 9).key_bytes == derive_pairwise_key(MASTER, 3, 9).key_bytes
    assert len(derive_pairwise_key(MASTER, 3, 9).key_bytes) == 16


def test_pairwise_keys_are_distinct_across_pairs():
    keys = {derive_pairwise_key(MASTER, i, j).key_bytes for i, j in itertools.combinations(range(1, 27), 2)}
    assert len(keys) == 26 * 25 // 2


def test_self_key_differs_from_pairwise_keys():
    own = derive_self_key(MASTER, 4).key_bytes
    assert all(own != derive_pairwise_key(MASTER, 4, j).key_bytes for j in (1, 2, 3, 5))


def test_key_derivation_errors():
    with pytest.raises(KeyDerivationError):
        derive_pairwise_key(MASTER, 5, 5)
    with pytest.raises(KeyDerivationError):
        derive_pairwise_key(b"short", 1, 2)


def test_seal_and_open():
    key = derive_pairwise_key(MASTER, 1, 2)
    share = share_for(2, 123456)
    sealed = seal_share(key, share, (0, 7))
    assert (sealed.sender, sealed.destination, sealed.nonce) == (1, 2, (0, 7))
    assert len(sealed.tag) == 16
    assert open_share(key, sealed) == share
    # opening is pure
    assert open_share(key, sealed) == share


def test_sealed_share_wire_encoding():
    key = derive_pairwise_key(MASTER, 4, 11)
    sealed = seal_share(key, share_for(4, 99), (3, 40))
    decoded = SealedShare.from_bytes(sealed.to_bytes())
    assert decoded == sealed
    assert open_share(key, decoded).value.value == 99


def test_wrong_key_fails_authentication():
    sealed = seal_share(derive_pairwise_key(MASTER, 1, 2), share_for(2, 5), (0, 0))
    with pytest.raises(AuthenticationError):
        open_share(derive_pairwise_key(MASTER, 1, 3), sealed)


def test_share_for_a_third_node_cannot_be_sealed():
    with pytest.raises(SealError):
        seal_share(derive_pairwise_key(MASTER, 1, 2), share_for(3, 5), (0, 0))


def test_same_share_different_nonce_gives_different_ciphertext():
    key = derive_pairwise_key(MASTER, 1, 2)
    share = share_for(2, 77)
    first = seal_share(key, share, (0, 1))
    second = seal_share(key, share, (1, 1))
    assert first.ciphertext != second.ciphertext


def test_truncated_packet_is_rejected():
    key = derive_pairwise_key(MASTER, 1, 2)
    raw = seal_share(key, share_for(2, 5), (0, 0)).to_bytes()
    with pytest.raises(AuthenticationError):
        SealedShare.from_bytes(raw[:20])
    with pytest.raises(AuthenticationError):
        open_share(key, SealedShare.from_bytes(raw[:-1]))


def test_ledger_rejects_nonce_reuse():
    key = derive_pairwise_key(MASTER, 1, 2)
    ledger = NonceLedger()
    seal_share(key, share_for(2, 5), (0, 3), ledger)
    seal_share(key, share_for(2, 5), (0, 4), ledger)
    assert len(ledger) == 2
    with pytest.raises(NonceReuseError):
        seal_share(key, share_for(1, 6), (0, 3), ledger)


def test_many_random_round_trips():
    field = get_modulus()
    rng = np.random.default_rng(7)
    keys = {}
    for slot in range(10_000):
        i, j = (int(v) for v in rng.choice(np.arange(1, 46), size=2, replace=False))
        key = keys.setdefault((min(i, j), max(i, j)), derive_pairwise_key(MASTER, i, j))
        share = Share(public_point(j, field), field.random(rng))
        assert open_share(key, seal_share(key, share, (slot // 100, slot))) == share


def test_single_bit_tamper_is_detected():
    rng = np.random.default_rng(13)
    key = derive_pairwise_key(MASTER, 2, 6)
    raw = seal_share(key, share_for(6, 424242), (5, 17)).to_bytes()
    for _ in range(10_000):
        position = int(rng.integers(0, len(raw) * 8))
        tampered = bytearray(raw)
        tampered[position // 8] ^= 1 << (position % 8)
        with pytest.raises(AuthenticationError):
            open_share(key, SealedShare.from_bytes(bytes(tampered)))
