"""Pluggable cryptographic primitives.

Three suites share one interface:

* ``STANDARD``: AES-128-GCM, HMAC-SHA256 (truncated to 16 bytes) and an
  X25519/HKDF/AES-GCM sealed box for encrypt-to-sink.
* ``MAC_ONLY``: as ``STANDARD`` but layers use unauthenticated AES-128-CTR.
* ``TOY``: a SHA-256 keystream cipher with an 8-byte check value and a
  prefix-keyed SHA-256 MAC. Fully deterministic given the key, so packet
  bytes can be pinned in golden fixtures.

Randomness is always drawn from an injected source exposing ``bytes(n)``
and ``random()`` (``numpy.random.Generator`` qualifies, as does
:class:`SystemRandom`).
"""
from __future__ import annotations

import hashlib
import hmac
import os
import secrets
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

KEY_SIZE = 16
NONCE_SIZE = 8
_RAW = serialization.Encoding.Raw, serialization.PublicFormat.Raw


class DecryptFailed(Exception):
    """Wrong key, corrupted or truncated ciphertext."""


class SystemRandom:
    """CSPRNG-backed source with the same surface as ``numpy.random.Generator``."""

    def bytes(self, n: int) -> bytes:
        return os.urandom(n)

    def random(self) -> float:
        return secrets.randbits(53) / (1 << 53)


@dataclass(frozen=True)
class SymmetricKey:
    material: bytes
    version: int = 0

    def __post_init__(self):
        if len(self.material) != KEY_SIZE:
            raise ValueError(f"symmetric key must be {KEY_SIZE} bytes, got {len(self.material)}")
        if self.version < 0:
            raise ValueError("key version must be >= 0")

    @classmethod
    def generate(cls, rng, version: int = 0) -> "SymmetricKey":
        return cls(bytes(rng.bytes(KEY_SIZE)), version)

    def refreshed(self, rng) -> "SymmetricKey":
        return SymmetricKey.generate(rng, self.version + 1)


@dataclass(frozen=True)
class SinkKeyPair:
    private: bytes
    public: bytes

    @classmethod
    def generate(cls, rng) -> "SinkKeyPair":
        priv = X25519PrivateKey.from_private_bytes(bytes(rng.bytes(32)))
        return cls(_private_raw(priv), priv.public_key().public_bytes(*_RAW))


def _private_raw(priv: X25519PrivateKey) -> bytes:
    return priv.private_bytes(
        serialization.Encoding.Raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()
    )


def new_nonce(rng) -> bytes:
    return bytes(rng.bytes(NONCE_SIZE))


def encode_fields(*fields: bytes) -> bytes:
    """Length-prefixed concatenation, so MAC inputs parse unambiguously."""
    return b"".join(struct.pack(">H", len(f)) + f for f in fields)


def _key_bytes(key) -> bytes:
    raw = key.material if isinstance(key, SymmetricKey) else bytes(key)
    if len(raw) != KEY_SIZE:
        raise ValueError(f"symmetric key must be {KEY_SIZE} bytes")
    return raw


# -- sealed box (shared by both suites; deterministic given the rng) --------

_SEAL_INFO = b"gossicrypt/seal/v1"
_ZERO_IV = bytes(12)


def _seal_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    return HKDF(hashes.SHA256(), 16, salt=None, info=_SEAL_INFO + eph_pub + recipient_pub).derive(shared)


def pke_encrypt(public: bytes, plaintext: bytes, rng) -> bytes:
    eph = X25519PrivateKey.from_private_bytes(bytes(rng.bytes(32)))
    eph_pub = eph.public_key().public_bytes(*_RAW)
    key = _seal_key(eph.exchange(X25519PublicKey.from_public_bytes(public)), eph_pub, public)
    # fresh key per message, so a fixed IV is safe
    return eph_pub + AESGCM(key).encrypt(_ZERO_IV, plaintext, None)


def pke_decrypt(private: bytes, ciphertext: bytes) -> bytes:
    if len(ciphertext) < 32 + 16:
        raise DecryptFailed("sealed box too short")
    priv = X25519PrivateKey.from_private_bytes(private)
    my_pub = priv.public_key().public_bytes(*_RAW)
    eph_pub, body = ciphertext[:32], ciphertext[32:]
    key = _seal_key(priv.exchange(X25519PublicKey.from_public_bytes(eph_pub)), eph_pub, my_pub)
    try:
        return AESGCM(key).decrypt(_ZERO_IV, body, None)
    except InvalidTag as exc:
        raise DecryptFailed("sealed box rejected") from exc


class CipherSuite:
    name = "abstract"
    mac_size = 0
    ske_overhead = 0

    def ske_encrypt(self, key, plaintext: bytes, rng=None) -> bytes:
        raise NotImplementedError

    def ske_decrypt(self, key, ciphertext: bytes) -> bytes:
        raise NotImplementedError

    def mac(self, key, message: bytes) -> bytes:
        raise NotImplementedError

    def mac_verify(self, key, message: bytes, tag: bytes) -> bool:
        return hmac.compare_digest(self.mac(key, message), tag)

    def pke_encrypt(self, public: bytes, plaintext: bytes, rng) -> bytes:
        return pke_encrypt(public, plaintext, rng)

    def pke_decrypt(self, private: bytes, ciphertext: bytes) -> bytes:
        return pke_decrypt(private, ciphertext)

    def __repr__(self):
        return f"<CipherSuite {self.name}>"


class StandardSuite(CipherSuite):
    name = "standard"
    mac_size = 16
    ske_overhead = 12 + 16

    def ske_encrypt(self, key, plaintext, rng=None):
        iv = bytes(rng.bytes(12)) if rng is not None else os.urandom(12)
        return iv + AESGCM(_key_bytes(key)).encrypt(iv, bytes(plaintext), None)

    def ske_decrypt(self, key, ciphertext):
        if len(ciphertext) < self.ske_overhead:
            raise DecryptFailed("ciphertext too short")
        try:
            return AESGCM(_key_bytes(key)).decrypt(ciphertext[:12], ciphertext[12:], None)
        except InvalidTag as exc:
            raise DecryptFailed("authentication tag mismatch") from exc

    def mac(self, key, message):
        return hmac.new(_key_bytes(key), message, hashlib.sha256).digest()[: self.mac_size]


class MacOnlySuite(StandardSuite):
    """AES-128-CTR layers without a tag; integrity rests on the source MAC.

    A wrong key yields garbage instead of DecryptFailed, which surfaces
    downstream as a malformed packet or a MAC failure.
    """

    name = "mac-only"
    ske_overhead = 16

    def _ctr(self, key, iv):
        return Cipher(algorithms.AES(_key_bytes(key)), modes.CTR(iv))

    def ske_encrypt(self, key, plaintext, rng=None):
        iv = bytes(rng.bytes(16)) if rng is not None else os.urandom(16)
        enc = self._ctr(key, iv).encryptor()
        return iv + enc.update(bytes(plaintext)) + enc.finalize()

    def ske_decrypt(self, key, ciphertext):
        if len(ciphertext) < self.ske_overhead:
            raise DecryptFailed("ciphertext too short")
        dec = self._ctr(key, ciphertext[:16]).decryptor()
        return dec.update(ciphertext[16:]) + dec.finalize()


def _xor(a: bytes, b: bytes) -> bytes:
    n = len(a)
    return (int.from_bytes(a, "big") ^ int.from_bytes(b[:n], "big")).to_bytes(n, "big")


def _keystream(key: bytes, n: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < n:
        out += hashlib.sha256(b"toy-ks" + key + counter.to_bytes(4, "big")).digest()
        counter += 1
    return bytes(out[:n])


class ToySuite(CipherSuite):
    """Deterministic stand-in for golden tests. Not secure."""

    name = "toy"
    mac_size = 8
    ske_overhead = 8

    def _check(self, key, plaintext):
        return hashlib.sha256(b"toy-chk" + key + plaintext).digest()[:8]

    def ske_encrypt(self, key, plaintext, rng=None):
        k = _key_bytes(key)
        body = bytes(plaintext) + self._check(k, bytes(plaintext))
        return _xor(body, _keystream(k, len(body)))

    def ske_decrypt(self, key, ciphertext):
        k = _key_bytes(key)
        if len(ciphertext) < self.ske_overhead:
            raise DecryptFailed("ciphertext too short")
        body = _xor(bytes(ciphertext), _keystream(k, len(ciphertext)))
        pt, chk = body[:-8], body[-8:]
        if not hmac.compare_digest(chk, self._check(k, pt)):
            raise DecryptFailed("check value mismatch")
        return pt

    def mac(self, key, message):
        return hashlib.sha256(b"toy-mac" + _key_bytes(key) + message).digest()[: self.mac_size]


STANDARD = StandardSuite()
TOY = ToySuite()
MAC_ONLY = MacOnlySuite()
SUITES = {s.name: s for s in (STANDARD, MAC_ONLY, TOY)}


def get_suite(name: str) -> CipherSuite:
    try:
        return SUITES[name]
    except KeyError:
        raise ValueError(f"unknown cipher suite {name!r}; choose from {sorted(SUITES)}") from None
