"""Point-to-point channels between parties.

Two modes: ``plaintext`` passes payload bytes through untouched so transcripts
stay readable; ``sealed`` encrypts each payload to the receiver's X25519 key
(ephemeral-static ECDH, HKDF-SHA256, ChaCha20-Poly1305). Key material comes
from a caller-supplied RNG so seeded runs produce identical wire bytes.
"""

from __future__ import annotations

import random

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..errors import ChannelError

PLAINTEXT = "plaintext"
SEALED = "sealed"
_NONCE = bytes(12)  # each seal uses a fresh ephemeral key, so a fixed nonce never repeats under one key
_INFO = b"twokey channel v1"


def _raw_public(key: X25519PublicKey) -> bytes:
    return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def _derive(shared: bytes, eph_pub: bytes, receiver_pub: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=eph_pub + receiver_pub, info=_INFO).derive(shared)


class SealedChannel:
    """Channel factory for every party pair in one simulation."""

    def __init__(self, mode: str = PLAINTEXT, rng: random.Random | None = None):
        if mode not in (PLAINTEXT, SEALED):
            raise ValueError(f"unknown channel mode {mode!r}")
        self.mode = mode
        self._rng = rng or random.Random()
        self._keys: dict[str, X25519PrivateKey] = {}

    def register(self, party: str) -> bytes:
        """Create (once) the party's static key pair and return its public key."""
        if party not in self._keys:
            self._keys[party] = X25519PrivateKey.from_private_bytes(self._rng.randbytes(32))
        return _raw_public(self._keys[party].public_key())

    def public_key(self, party: str) -> bytes:
        return self.register(party)

    def seal(self, payload: bytes, receiver: str) -> bytes:
        if self.mode == PLAINTEXT:
            return payload
        receiver_pub = X25519PublicKey.from_public_bytes(self.public_key(receiver))
        eph = X25519PrivateKey.from_private_bytes(self._rng.randbytes(32))
        eph_pub = _raw_public(eph.public_key())
        key = _derive(eph.exchange(receiver_pub), eph_pub, _raw_public(receiver_pub))
        return eph_pub + ChaCha20Poly1305(key).encrypt(_NONCE, payload, None)

    def open(self, wire: bytes, receiver: str) -> bytes:
        if self.mode == PLAINTEXT:
            return wire
        if receiver not in self._keys:
            raise ChannelError(f"{receiver} has no channel key")
        if len(wire) < 32 + 16:
            raise ChannelError("sealed message too short")
        priv = self._keys[receiver]
        eph_pub = wire[:32]
        key = _derive(priv.exchange(X25519PublicKey.from_public_bytes(eph_pub)), eph_pub,
                      _raw_public(priv.public_key()))
        try:
            return ChaCha20Poly1305(key).decrypt(_NONCE, wire[32:], None)
        except InvalidTag:
            raise ChannelError(f"{receiver} cannot open this message") from None
