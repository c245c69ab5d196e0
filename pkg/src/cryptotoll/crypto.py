"""Cryptographic substrate: signatures, authenticated boxes, hashing, nonces.

The default suite is Ed25519 for signatures and X25519 + HKDF-SHA256 +
ChaCha20-Poly1305 for the public-key box, with SHA-256 digests. The suite
sits behind a substitution point (CipherSuite) so it can be swapped without
touching protocol code.

Private key material lives inside a KeyStore and is reachable only through
opaque handles; no public operation returns raw signing-key bytes. A
verification key is a 64-byte composite: signing public key followed by the
box public key, both derived deterministically from the same 32-byte seed.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives import hashes

SEED_BYTES = 32
NONCE_BYTES = 16
DIGEST_BYTES = 32
SIGN_PUB_BYTES = 32
BOX_PUB_BYTES = 32
VERKEY_BYTES = SIGN_PUB_BYTES + BOX_PUB_BYTES

_AEAD_NONCE_BYTES = 12
_AEAD_TAG_BYTES = 16


class CryptoError(Exception):
    pass


class AuthenticationFailure(CryptoError):
    """Wrong sender key or tampered ciphertext (distinct from malformed input)."""


class DanglingHandle(CryptoError):
    """Handle does not refer to a live keystore entry."""


def hash_bytes(message: bytes) -> bytes:
    """256-bit digest of a byte string."""
    return hashlib.sha256(message).digest()


def new_nonce(rng) -> bytes:
    """Fresh 128-bit nonce drawn from the supplied seeded RNG."""
    return rng.getrandbits(8 * NONCE_BYTES).to_bytes(NONCE_BYTES, "big")


@dataclass(frozen=True)
class KeyPair:
    """Public half of a keypair plus the handle of its wallet-held secret."""

    verkey: bytes
    sigkey_handle: str


@dataclass
class _PrivateMaterial:
    seed: bytes = field(repr=False)
    sign_key: Ed25519PrivateKey = field(repr=False)
    box_key: X25519PrivateKey = field(repr=False)
    verkey: bytes = b""


class CipherSuite:
    """Default suite; subclass and override to substitute algorithms."""

    seed_bytes = SEED_BYTES
    verkey_bytes = VERKEY_BYTES

    def derive(self, seed: bytes) -> _PrivateMaterial:
        if not isinstance(seed, (bytes, bytearray)) or len(seed) != self.seed_bytes:
            raise CryptoError(f"seed must be {self.seed_bytes} bytes")
        seed = bytes(seed)
        sign_key = Ed25519PrivateKey.from_private_bytes(seed)
        # independent box key from the same seed, domain-separated
        box_seed = hash_bytes(b"box-key:" + seed)
        box_key = X25519PrivateKey.from_private_bytes(box_seed)
        verkey = self._raw_public(sign_key) + self._raw_public(box_key)
        return _PrivateMaterial(seed=seed, sign_key=sign_key, box_key=box_key, verkey=verkey)

    @staticmethod
    def _raw_public(key) -> bytes:
        from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

        return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    @staticmethod
    def _split_verkey(verkey: bytes) -> tuple:
        if not isinstance(verkey, (bytes, bytearray)) or len(verkey) != VERKEY_BYTES:
            raise ValueError(f"verkey must be {VERKEY_BYTES} bytes")
        verkey = bytes(verkey)
        return verkey[:SIGN_PUB_BYTES], verkey[SIGN_PUB_BYTES:]

    def sign(self, material: _PrivateMaterial, message: bytes) -> bytes:
        return material.sign_key.sign(message)

    def verify(self, verkey: bytes, message: bytes, signature: bytes) -> bool:
        sign_pub, _ = self._split_verkey(verkey)
        try:
            Ed25519PublicKey.from_public_bytes(sign_pub).verify(signature, message)
            return True
        except InvalidSignature:
            return False

    def _box_key(self, shared: bytes, sender_pub: bytes, recipient_pub: bytes, tag: bytes) -> bytes:
        return HKDF(
            algorithm=hashes.SHA256(),
            length=32,
            salt=None,
            info=tag + sender_pub + recipient_pub,
        ).derive(shared)

    def box(self, sender: _PrivateMaterial, recipient_verkey: bytes, plaintext: bytes) -> bytes:
        _, recipient_box_pub = self._split_verkey(recipient_verkey)
        peer = X25519PublicKey.from_public_bytes(recipient_box_pub)
        shared = sender.box_key.exchange(peer)
        sender_box_pub = self._raw_public(sender.box_key)
        key = self._box_key(shared, sender_box_pub, recipient_box_pub, b"auth-box:")
        nonce = os.urandom(_AEAD_NONCE_BYTES)
        return nonce + ChaCha20Poly1305(key).encrypt(nonce, plaintext, None)

    def unbox(self, recipient: _PrivateMaterial, sender_verkey: bytes, ciphertext: bytes) -> bytes:
        _, sender_box_pub = self._split_verkey(sender_verkey)
        if len(ciphertext) < _AEAD_NONCE_BYTES + _AEAD_TAG_BYTES:
            raise ValueError("ciphertext too short")
        peer = X25519PublicKey.from_public_bytes(sender_box_pub)
        shared = recipient.box_key.exchange(peer)
        recipient_box_pub = self._raw_public(recipient.box_key)
        key = self._box_key(shared, sender_box_pub, recipient_box_pub, b"auth-box:")
        nonce, body = ciphertext[:_AEAD_NONCE_BYTES], ciphertext[_AEAD_NONCE_BYTES:]
        try:
            return ChaCha20Poly1305(key).decrypt(nonce, body, None)
        except InvalidTag:
            raise AuthenticationFailure("box authentication failed") from None

    def seal(self, recipient_verkey: bytes, plaintext: bytes) -> bytes:
        """Anonymous box: a fresh ephemeral key is prepended to the ciphertext."""
        _, recipient_box_pub = self._split_verkey(recipient_verkey)
        eph = X25519PrivateKey.generate()
        eph_pub = self._raw_public(eph)
        shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient_box_pub))
        key = self._box_key(shared, eph_pub, recipient_box_pub, b"seal-box:")
        nonce = os.urandom(_AEAD_NONCE_BYTES)
        return eph_pub + nonce + ChaCha20Poly1305(key).encrypt(nonce, plaintext, None)

    def unseal(self, recipient: _PrivateMaterial, ciphertext: bytes) -> bytes:
        if len(ciphertext) < BOX_PUB_BYTES + _AEAD_NONCE_BYTES + _AEAD_TAG_BYTES:
            raise ValueError("sealed ciphertext too short")
        eph_pub = ciphertext[:BOX_PUB_BYTES]
        nonce = ciphertext[BOX_PUB_BYTES : BOX_PUB_BYTES + _AEAD_NONCE_BYTES]
        body = ciphertext[BOX_PUB_BYTES + _AEAD_NONCE_BYTES :]
        shared = recipient.box_key.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        recipient_box_pub = self._raw_public(recipient.box_key)
        key = self._box_key(shared, eph_pub, recipient_box_pub, b"seal-box:")
        try:
            return ChaCha20Poly1305(key).decrypt(nonce, body, None)
        except InvalidTag:
            raise AuthenticationFailure("seal authentication failed") from None


DEFAULT_SUITE = CipherSuite()


def verify(verkey: bytes, message: bytes, signature: bytes, suite: CipherSuite = DEFAULT_SUITE) -> bool:
    """Check a signature against a verification key. Needs no private state."""
    return suite.verify(verkey, message, signature)


def seal(recipient_verkey: bytes, plaintext: bytes, suite: CipherSuite = DEFAULT_SUITE) -> bytes:
    """Encrypt to a verkey without authenticating the sender."""
    return suite.seal(recipient_verkey, plaintext)


class KeyStore:
    """Holds private key material; callers only ever see handles."""

    def __init__(self, suite: CipherSuite = DEFAULT_SUITE) -> None:
        self.suite = suite
        self._entries: Dict[str, _PrivateMaterial] = {}
        self._counter = 0

    def generate_keypair(self, seed: bytes) -> KeyPair:
        """Deterministic keypair: the same seed always yields the same verkey."""
        material = self.suite.derive(seed)
        self._counter += 1
        handle = f"key-{self._counter}"
        self._entries[handle] = material
        return KeyPair(verkey=material.verkey, sigkey_handle=handle)

    def _material(self, handle: str) -> _PrivateMaterial:
        try:
            return self._entries[handle]
        except KeyError:
            raise DanglingHandle(f"no key under handle {handle!r}") from None

    def verkey_of(self, handle: str) -> bytes:
        return self._material(handle).verkey

    def sign(self, handle: str, message: bytes) -> bytes:
        return self.suite.sign(self._material(handle), message)

    def auth_encrypt(self, sender_handle: str, recipient_verkey: bytes, plaintext: bytes) -> bytes:
        return self.suite.box(self._material(sender_handle), recipient_verkey, plaintext)

    def auth_decrypt(self, recipient_handle: str, sender_verkey: bytes, ciphertext: bytes) -> bytes:
        return self.suite.unbox(self._material(recipient_handle), sender_verkey, ciphertext)

    def unseal(self, recipient_handle: str, ciphertext: bytes) -> bytes:
        return self.suite.unseal(self._material(recipient_handle), ciphertext)

    def drop(self, handle: str) -> None:
        self._entries.pop(handle, None)

    # Serialization hook for the wallet's fixture-flagged export; not part of
    # the public operation surface.
    def _export_seed(self, handle: str) -> bytes:
        return self._material(handle).seed
