"""Hashing and signatures.

SHA-256 digests and Ed25519 signatures. Ed25519 is deterministic and keys
derive from a 32-byte seed, so a simulation seeded the same way produces
the same signatures byte for byte.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

DIGEST_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64


class Digest(bytes):
    """A 32-byte SHA-256 value. Renders as lowercase hex."""

    def __new__(cls, value: bytes = b"") -> Digest:
        if len(value) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def from_hex(cls, text: str) -> Digest:
        return cls(bytes.fromhex(text))

    def __repr__(self) -> str:
        return f"Digest({self.hex()[:16]}…)"

    def __str__(self) -> str:
        return self.hex()


ZERO_DIGEST = Digest(bytes(DIGEST_SIZE))


def hash_bytes(data: bytes) -> Digest:
    return Digest(hashlib.sha256(data).digest())


@dataclass(frozen=True)
class Signature:
    signer: bytes
    sig: bytes


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret_key: bytes = field(repr=False)

    @classmethod
    def from_seed(cls, seed: bytes) -> KeyPair:
        if len(seed) != 32:
            raise ValueError("key seed must be 32 bytes")
        sk = Ed25519PrivateKey.from_private_bytes(seed)
        pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        raw = sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
        return cls(public_key=pk, secret_key=raw)

    @cached_property
    def _signer(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.secret_key)


def sign(key: KeyPair, msg: bytes) -> Signature:
    return Signature(signer=key.public_key, sig=key._signer.sign(msg))


@lru_cache(maxsize=1 << 18)
def verify(public_key: bytes, msg: bytes, signature: Signature) -> bool:
    """Check a signature. Malformed keys or signatures yield False."""
    if not isinstance(signature, Signature) or signature.signer != public_key:
        return False
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature.sig) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature.sig, msg)
    except (InvalidSignature, ValueError):
        return False
    return True
