"""Pluggable cryptographic primitives: gen / enc / dec / sign / verify.

Three backends:

* ``real`` -- the production scheme.  Hybrid encryption: a fresh 32-byte
  symmetric key per encryption drives AES-256-CTR with a random IV, the whole
  ciphertext is HMAC-SHA256 protected (encrypt-then-MAC), and the symmetric
  key is wrapped to the recipient via an ephemeral X25519 exchange.
  Signatures are Ed25519.  Encryption and signing keys are independent halves
  of the key material.
* ``testvec`` -- deterministic, hash-only stand-in for wire-format fixtures.
  Its "public" key embeds the secret; it has no security whatsoever.
* ``identity`` -- deliberately broken plaintext passthrough, the positive
  control for the indistinguishability harness.

All randomness is drawn from an injected ``random.Random`` so that runs are
reproducible from a seed.  Ciphertext length is a function of plaintext
length only (a constant per-layer overhead), which keeps equal-length
plaintexts indistinguishable by size.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from random import Random
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF


class CryptoFailure(Exception):
    """Decryption or structural failure inside a provider."""


@dataclass(frozen=True)
class KeyPair:
    """Public material plus optionally the private half.

    A missing private half means identity-only knowledge of the principal.
    """

    public: bytes
    private: Optional[bytes] = None

    @property
    def has_private(self) -> bool:
        return self.private is not None

    def public_only(self) -> "KeyPair":
        return KeyPair(self.public, None)


class CryptoProvider:
    """Interface; see module docstring.  `ciphertext_overhead` is the constant
    added to the plaintext length by one encryption layer."""

    name: str = "abstract"
    ciphertext_overhead: int = 0
    signature_length: int = 0

    def gen(self, rng: Random) -> KeyPair:
        raise NotImplementedError

    def enc(self, public: bytes, plaintext: bytes, rng: Random) -> bytes:
        raise NotImplementedError

    def dec(self, private: bytes, ciphertext: bytes) -> bytes:
        raise NotImplementedError

    def sign(self, private: bytes, message: bytes, rng: Random) -> bytes:
        raise NotImplementedError

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


def ciphertext_length_profile(provider: CryptoProvider, plaintext_len: int) -> int:
    """Ciphertext length as a function of plaintext length alone."""
    if plaintext_len < 0:
        raise ValueError("negative plaintext length")
    return plaintext_len + provider.ciphertext_overhead


def _hkdf(material: bytes, info: bytes, length: int) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=length, salt=None, info=info
    ).derive(material)


class RealProvider(CryptoProvider):
    name = "real"
    # eph X25519 pub (32) + wrapped key (32) + IV (16) + MAC (32)
    ciphertext_overhead = 112
    signature_length = 64

    _WRAP_INFO = b"flowstore/key-wrap/v1"
    _SYM_INFO = b"flowstore/sym-keys/v1"

    def gen(self, rng: Random) -> KeyPair:
        enc_priv = rng.randbytes(32)
        sign_seed = rng.randbytes(32)
        enc_pub = (
            X25519PrivateKey.from_private_bytes(enc_priv)
            .public_key()
            .public_bytes_raw()
        )
        sign_pub = (
            Ed25519PrivateKey.from_private_bytes(sign_seed)
            .public_key()
            .public_bytes_raw()
        )
        return KeyPair(public=enc_pub + sign_pub, private=enc_priv + sign_seed)

    def enc(self, public: bytes, plaintext: bytes, rng: Random) -> bytes:
        if len(public) != 64:
            raise CryptoFailure("malformed public key")
        recipient = X25519PublicKey.from_public_bytes(public[:32])
        sym_key = rng.randbytes(32)
        iv = rng.randbytes(16)
        eph = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
        eph_pub = eph.public_key().public_bytes_raw()
        shared = eph.exchange(recipient)
        wrap_key = _hkdf(shared, self._WRAP_INFO + eph_pub + public[:32], 32)
        wrapped = bytes(a ^ b for a, b in zip(sym_key, wrap_key))
        enc_key, mac_key = self._sym_keys(sym_key)
        body = _aes_ctr(enc_key, iv, plaintext)
        mac = hmac.new(mac_key, eph_pub + wrapped + iv + body, hashlib.sha256).digest()
        return eph_pub + wrapped + iv + body + mac

    def dec(self, private: bytes, ciphertext: bytes) -> bytes:
        if len(private) != 64:
            raise CryptoFailure("malformed private key")
        if len(ciphertext) < self.ciphertext_overhead:
            raise CryptoFailure("ciphertext too short")
        eph_pub, wrapped = ciphertext[:32], ciphertext[32:64]
        iv = ciphertext[64:80]
        body, mac = ciphertext[80:-32], ciphertext[-32:]
        me = X25519PrivateKey.from_private_bytes(private[:32])
        my_pub = me.public_key().public_bytes_raw()
        shared = me.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        wrap_key = _hkdf(shared, self._WRAP_INFO + eph_pub + my_pub, 32)
        sym_key = bytes(a ^ b for a, b in zip(wrapped, wrap_key))
        enc_key, mac_key = self._sym_keys(sym_key)
        expect = hmac.new(mac_key, eph_pub + wrapped + iv + body, hashlib.sha256).digest()
        if not hmac.compare_digest(mac, expect):
            raise CryptoFailure("ciphertext authentication failed")
        return _aes_ctr(enc_key, iv, body)

    def sign(self, private: bytes, message: bytes, rng: Random) -> bytes:
        if len(private) != 64:
            raise CryptoFailure("malformed private key")
        return Ed25519PrivateKey.from_private_bytes(private[32:]).sign(message)

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        if len(public) != 64 or len(signature) != 64:
            return False
        try:
            Ed25519PublicKey.from_public_bytes(public[32:]).verify(signature, message)
            return True
        except InvalidSignature:
            return False

    def _sym_keys(self, sym_key: bytes) -> tuple[bytes, bytes]:
        okm = _hkdf(sym_key, self._SYM_INFO, 64)
        return okm[:32], okm[32:]


def _aes_ctr(key: bytes, iv: bytes, data: bytes) -> bytes:
    cipher = Cipher(algorithms.AES(key), modes.CTR(iv))
    enc = cipher.encryptor()
    return enc.update(data) + enc.finalize()


class TestVectorProvider(CryptoProvider):
    """Deterministic fixture backend.  The public key embeds the secret so
    that both directions recompute the same keystream and MAC; never a
    security mechanism."""

    name = "testvec"
    _MAGIC_PUB = b"TVPK"
    _MAGIC_CT = b"TVC"
    ciphertext_overhead = 3 + 8 + 16
    signature_length = 32

    def gen(self, rng: Random) -> KeyPair:
        secret = rng.randbytes(32)
        return KeyPair(public=self._MAGIC_PUB + secret, private=secret)

    def _secret_of_public(self, public: bytes) -> bytes:
        if not public.startswith(self._MAGIC_PUB) or len(public) != 36:
            raise CryptoFailure("malformed test-vector public key")
        return public[4:]

    def enc(self, public: bytes, plaintext: bytes, rng: Random) -> bytes:
        secret = self._secret_of_public(public)
        iv = rng.randbytes(8)
        body = _xor_stream(secret, iv, plaintext)
        mac = hmac.new(secret, b"tv-enc" + iv + body, hashlib.sha256).digest()[:16]
        return self._MAGIC_CT + iv + body + mac

    def dec(self, private: bytes, ciphertext: bytes) -> bytes:
        if len(private) != 32:
            raise CryptoFailure("malformed test-vector private key")
        if len(ciphertext) < self.ciphertext_overhead or not ciphertext.startswith(
            self._MAGIC_CT
        ):
            raise CryptoFailure("malformed test-vector ciphertext")
        iv = ciphertext[3:11]
        body, mac = ciphertext[11:-16], ciphertext[-16:]
        expect = hmac.new(private, b"tv-enc" + iv + body, hashlib.sha256).digest()[:16]
        if not hmac.compare_digest(mac, expect):
            raise CryptoFailure("test-vector ciphertext authentication failed")
        return _xor_stream(private, iv, body)

    def sign(self, private: bytes, message: bytes, rng: Random) -> bytes:
        if len(private) != 32:
            raise CryptoFailure("malformed test-vector private key")
        return hmac.new(private, b"tv-sig" + message, hashlib.sha256).digest()

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        try:
            secret = self._secret_of_public(public)
        except CryptoFailure:
            return False
        expect = hmac.new(secret, b"tv-sig" + message, hashlib.sha256).digest()
        return hmac.compare_digest(signature, expect)


def _xor_stream(secret: bytes, iv: bytes, data: bytes) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < len(data):
        block = hashlib.sha256(secret + iv + counter.to_bytes(8, "big")).digest()
        out.extend(block)
        counter += 1
    return bytes(a ^ b for a, b in zip(data, out))


class IdentityProvider(CryptoProvider):
    """Broken on purpose: ciphertext is the plaintext behind a tag and the
    signature is a constant.  Positive control for the security games."""

    name = "identity"
    _TAG = b"IDC:"
    _SIG = b"IDSIG"
    ciphertext_overhead = 4
    signature_length = 5

    def gen(self, rng: Random) -> KeyPair:
        token = rng.randbytes(8)
        return KeyPair(public=b"IDPK" + token, private=token)

    def enc(self, public: bytes, plaintext: bytes, rng: Random) -> bytes:
        return self._TAG + plaintext

    def dec(self, private: bytes, ciphertext: bytes) -> bytes:
        if not ciphertext.startswith(self._TAG):
            raise CryptoFailure("missing identity tag")
        return ciphertext[4:]

    def sign(self, private: bytes, message: bytes, rng: Random) -> bytes:
        return self._SIG

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        return signature == self._SIG


_PROVIDERS = {
    "real": RealProvider,
    "testvec": TestVectorProvider,
    "identity": IdentityProvider,
}


def real_provider() -> CryptoProvider:
    return RealProvider()


def identity_provider() -> CryptoProvider:
    return IdentityProvider()


def testvec_provider() -> CryptoProvider:
    return TestVectorProvider()


def get_provider(name: str) -> CryptoProvider:
    try:
        return _PROVIDERS[name]()
    except KeyError:
        raise ValueError(
            f"unknown provider {name!r}; choose from {sorted(_PROVIDERS)}"
        ) from None
