"""Deterministic key material, hashing and Ed25519 signatures."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

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
SIGNATURE_SIZE = 64


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    secret: bytes


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 digest; 32 bytes."""
    return hashlib.sha256(data).digest()


def keygen(seed: int) -> KeyPair:
    """Derive an Ed25519 key pair from an integer seed.

    The same seed always yields the same pair, which keeps simulated runs
    reproducible.
    """
    raw = hash_bytes(b"duobft-keygen" + seed.to_bytes(16, "big", signed=True))
    sk = Ed25519PrivateKey.from_private_bytes(raw)
    public = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    secret = sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
    return KeyPair(public=public, secret=secret)


@lru_cache(maxsize=4096)
def _signer(secret: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(secret)


@lru_cache(maxsize=4096)
def _verifier(public: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(public)


def sign(secret: bytes, data: bytes) -> bytes:
    return _signer(secret).sign(data)


@lru_cache(maxsize=1 << 18)
def verify(public: bytes, data: bytes, signature: bytes) -> bool:
    # Memoised: every replica re-checks the same broadcast signatures.
    if len(signature) != SIGNATURE_SIZE or len(public) != 32:
        return False
    try:
        _verifier(public).verify(signature, data)
    except (InvalidSignature, ValueError):
        return False
    return True
