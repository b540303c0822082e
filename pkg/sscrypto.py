"""
Share Crypto Module
Pairwise keys and authenticated sealing of shares for the sharing phase
Reconstruction payloads travel in plaintext and never pass through here

Wire format of a sealed share (little-endian):
    sender (2) | destination (2) | round (8) | sub-slot (4) | ciphertext (16) | tag (16)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ffield import get_modulus
from shamir import Share

KEY_BYTES = 16  # AES-128
TAG_BYTES = 16

HKDF_INFO_PAIRWISE = b"sss-ct-pairwise-key"
HKDF_INFO_SELF = b"sss-ct-self-key"

_HEADER = struct.Struct("<HHQI")
_NONCE = struct.Struct("<QI")  # 12-byte GCM nonce = round id | sub-slot index


class SealError(ValueError):
    """Base class for share sealing errors"""


class KeyDerivationError(SealError):
    pass


class AuthenticationError(SealError):
    """Wrong key, wrong addressing or a corrupted packet"""


class NonceReuseError(SealError):
    pass


@dataclass(frozen=True)
class PairwiseKey:
    """128-bit key shared by an unordered node pair"""

    key_bytes: bytes
    pair: tuple  # (min id, max id)

    def __repr__(self):
        return f"PairwiseKey({self.pair[0]}<->{self.pair[1]})"


@dataclass(frozen=True)
class SealedShare:
    """Authenticated ciphertext of one share addressed to one node"""

    sender: int
    destination: int
    nonce: tuple  # (round id, sub-slot index)
    ciphertext: bytes
    tag: bytes

    def header(self):
        round_id, slot = self.nonce
        return _HEADER.pack(self.sender, self.destination, round_id, slot)

    def to_bytes(self):
        return self.header() + self.ciphertext + self.tag

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size + TAG_BYTES:
            raise AuthenticationError(f"sealed share too short ({len(data)} bytes)")
        sender, destination, round_id, slot = _HEADER.unpack_from(data, 0)
        body = data[_HEADER.size:]
        return cls(sender, destination, (round_id, slot), body[:-TAG_BYTES], body[-TAG_BYTES:])


class NonceLedger:
    """Remembers (key pair, nonce) uses within one round"""

    def __init__(self):
        self._used = set()

    def claim(self, key, nonce):
        entry = (key.pair, tuple(nonce))
        if entry in self._used:
            raise NonceReuseError(f"nonce {nonce} already used with key {key.pair}")
        self._used.add(entry)

    def __len__(self):
        return len(self._used)


def _hkdf(master_secret, info, salt):
    if len(master_secret) != KEY_BYTES:
        raise KeyDerivationError(f"master secret must be {KEY_BYTES} bytes, got {len(master_secret)}")
    return HKDF(algorithm=SHA256(), length=KEY_BYTES, salt=salt, info=info).derive(master_secret)


def derive_pairwise_key(master_secret, i, j):
    """
    Derive the key shared by nodes i and j (symmetric in i, j)

    Args:
        master_secret: 16 raw bytes
        i, j: Distinct node ids

    Returns:
        PairwiseKey
    """
    if i == j:
        raise KeyDerivationError(f"a pairwise key needs two distinct nodes, got {i} twice")
    lo, hi = sorted((int(i), int(j)))
    salt = struct.pack("<II", lo, hi)
    return PairwiseKey(_hkdf(master_secret, HKDF_INFO_PAIRWISE, salt), (lo, hi))


def derive_self_key(master_secret, i):
    """Key protecting a node's share for itself while it floods through the chain"""
    salt = struct.pack("<I", int(i))
    return PairwiseKey(_hkdf(master_secret, HKDF_INFO_SELF, salt), (int(i), int(i)))


def _addressing(key, share):
    """Sender is the key holder that is not the share's point owner"""
    destination = share.point.owner_node
    lo, hi = key.pair
    if destination not in key.pair:
        raise SealError(f"share for node {destination} cannot use key {key.pair}")
    sender = hi if destination == lo else lo
    return sender, destination


def seal_share(key, share, nonce, ledger=None):
    """
    Encrypt and authenticate a share with AES-128-GCM

    Args:
        key: PairwiseKey of sender and destination
        share: Share whose point belongs to the destination
        nonce: (round id, sub-slot index)
        ledger: Optional NonceLedger enforcing one use per key and round

    Returns:
        SealedShare
    """
    if ledger is not None:
        ledger.claim(key, nonce)
    sender, destination = _addressing(key, share)
    header = _HEADER.pack(sender, destination, *nonce)
    sealed = AESGCM(key.key_bytes).encrypt(_NONCE.pack(*nonce), share.to_bytes(), header)
    return SealedShare(sender, destination, tuple(nonce), sealed[:-TAG_BYTES], sealed[-TAG_BYTES:])


def open_share(key, sealed, field=None):
    """
    Authenticate and decrypt a sealed share

    Args:
        key: PairwiseKey
        sealed: SealedShare
        field: FieldModulus the share lives in (default: configured modulus)

    Returns:
        Share

    Raises:
        AuthenticationError: wrong key, altered header, ciphertext or tag
    """
    try:
        plaintext = AESGCM(key.key_bytes).decrypt(
            _NONCE.pack(*sealed.nonce), sealed.ciphertext + sealed.tag, sealed.header()
        )
    except InvalidTag as exc:
        raise AuthenticationError(
            f"share {sealed.sender}->{sealed.destination} failed authentication"
        ) from exc
    return Share.from_bytes(plaintext, field or get_modulus())
