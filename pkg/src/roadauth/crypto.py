"""Chaotic-map and byte-level primitives.

The chaotic map is the extended Chebyshev polynomial over Z_p::

    T_0(y) = 1,  T_1(y) = y,  T_n(y) = 2y T_{n-1}(y) - T_{n-2}(y)  (mod p)

which satisfies ``T_a(T_b(y)) = T_ab(y)`` and therefore supports a
Diffie-Hellman style agreement.  Everything else here (length-prefixed
framing, hashing, XOR masking, AEAD) is plumbing the protocol layer builds on.

Randomness is always taken from an explicit ``rng`` argument with the
:class:`random.Random` interface (``randrange``, ``randbytes``).  Pass a
seeded ``random.Random`` for reproducible simulations, or leave the default
:data:`SYSTEM_RNG` for OS randomness.
"""

from __future__ import annotations

import hashlib
import random
import struct
import time
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from sympy import isprime

from .counters import record
from .errors import AuthFailure, DecodeError, FieldTooLong, InvalidParams, ValueTooLong

DEFAULT_PRIME = 2**256 - 189
TEST_PRIME = 251
DEFAULT_SEED = 2
DEFAULT_HASH = "sha256"
DIGEST_SIZE = 32
NONCE_SIZE = 12
TS_SIZE = 8

SYSTEM_RNG = random.SystemRandom()


@dataclass(frozen=True)
class ChebyParams:
    """Public chaotic-map parameters: prime modulus ``p`` and seed ``x``."""

    p: int
    x: int

    def __post_init__(self):
        if self.p < 2 or not isprime(self.p):
            raise InvalidParams(f"modulus {self.p} is not prime")
        if not 2 <= self.x <= self.p - 2:
            raise InvalidParams(f"seed {self.x} outside [2, p-2]")

    @property
    def element_width(self) -> int:
        """Bytes needed for a group element in fixed-width big-endian form."""
        return (self.p.bit_length() + 7) // 8

    @classmethod
    def default(cls) -> ChebyParams:
        return cls(DEFAULT_PRIME, DEFAULT_SEED)

    @classmethod
    def test(cls) -> ChebyParams:
        return cls(TEST_PRIME, DEFAULT_SEED)


@dataclass(frozen=True)
class ChebySecret:
    n: int

    def check(self, params: ChebyParams) -> None:
        if not 2 <= self.n <= params.p - 2:
            raise InvalidParams("chaotic secret outside [2, p-2]")


def _cheby(n: int, y: int, p: int) -> int:
    # Ladder over the bits of n keeping (T_m, T_{m+1}):
    #   T_2m = 2 T_m^2 - 1,  T_2m+1 = 2 T_m T_m+1 - y,  T_2m+2 = 2 T_m+1^2 - 1
    if n == 0:
        return 1 % p
    lo, hi = y, (2 * y * y - 1) % p
    for bit in bin(n)[3:]:
        if bit == "1":
            lo, hi = (2 * lo * hi - y) % p, (2 * hi * hi - 1) % p
        else:
            lo, hi = (2 * lo * lo - 1) % p, (2 * lo * hi - y) % p
    return lo


def cheby_eval(n: int, y: int, params: ChebyParams) -> int:
    """Return ``T_n(y) mod p`` using O(log n) modular multiplications."""
    if n < 0:
        raise InvalidParams("degree must be non-negative")
    if not 0 <= y < params.p:
        raise InvalidParams("argument outside [0, p-1]")
    record("cheby_evals")
    return _cheby(n, y, params.p)


def random_exponent(params: ChebyParams, rng=SYSTEM_RNG) -> int:
    """Uniform exponent in ``[2, p-2]``."""
    record("rng_draws")
    return rng.randrange(2, params.p - 1)


def random_bytes(n: int, rng=SYSTEM_RNG) -> bytes:
    record("rng_draws")
    return rng.randbytes(n)


def cheby_keypair(params: ChebyParams, rng=SYSTEM_RNG) -> tuple[ChebySecret, int]:
    secret = ChebySecret(random_exponent(params, rng))
    return secret, cheby_eval(secret.n, params.x, params)


# -- framing -----------------------------------------------------------------

def encode_fields(fields) -> bytes:
    """Length-prefix every field (4-byte big-endian) and concatenate."""
    fields = list(fields)
    if len(fields) >= 1 << 16:
        raise FieldTooLong("too many fields")
    out = bytearray()
    for f in fields:
        if len(f) >= 1 << 32:
            raise FieldTooLong("field longer than 2^32 - 1 bytes")
        out += struct.pack(">I", len(f))
        out += f
    return bytes(out)


def decode_fields(data: bytes) -> list[bytes]:
    """Inverse of :func:`encode_fields`; rejects truncated or trailing bytes."""
    fields = []
    pos = 0
    end = len(data)
    while pos < end:
        if end - pos < 4:
            raise DecodeError("truncated length prefix")
        (n,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if end - pos < n:
            raise DecodeError("field overruns buffer")
        fields.append(bytes(data[pos:pos + n]))
        pos += n
    return fields


def hash_fields(fields, algorithm: str = DEFAULT_HASH) -> bytes:
    record("hash_ops")
    return hashlib.new(algorithm, encode_fields(fields)).digest()


# -- integers and masking ------------------------------------------------------

def int_to_bytes(value: int, width: int) -> bytes:
    try:
        return value.to_bytes(width, "big")
    except OverflowError:
        raise ValueTooLong(f"{value} does not fit in {width} bytes") from None


def bytes_to_int(data: bytes) -> int:
    return int.from_bytes(data, "big")


def mask(value: bytes | int, pad: bytes) -> bytes:
    """XOR ``value`` (left zero-padded to ``len(pad)``) with ``pad``.

    Integers are first written big-endian at ``len(pad)`` bytes.  The
    operation is its own inverse.
    """
    if isinstance(value, int):
        value = int_to_bytes(value, len(pad))
    if len(value) > len(pad):
        raise ValueTooLong("value longer than pad")
    value = value.rjust(len(pad), b"\x00")
    return bytes(a ^ b for a, b in zip(value, pad))


unmask = mask


# -- authenticated encryption --------------------------------------------------

def sym_encrypt(key: bytes, plaintext: bytes, rng=SYSTEM_RNG, associated_data: bytes = b"") -> bytes:
    """AES-256-GCM; output is ``nonce || ciphertext || tag``."""
    if len(key) != DIGEST_SIZE:
        raise InvalidParams("symmetric key must be 32 bytes")
    record("sym_ops")
    nonce = random_bytes(NONCE_SIZE, rng)
    return nonce + AESGCM(key).encrypt(nonce, plaintext, associated_data)


def sym_decrypt(key: bytes, ciphertext: bytes, associated_data: bytes = b"") -> bytes:
    if len(key) != DIGEST_SIZE:
        raise InvalidParams("symmetric key must be 32 bytes")
    record("sym_ops")
    if len(ciphertext) < NONCE_SIZE + 16:
        raise AuthFailure("ciphertext too short")
    try:
        return AESGCM(key).decrypt(ciphertext[:NONCE_SIZE], ciphertext[NONCE_SIZE:], associated_data)
    except InvalidTag:
        raise AuthFailure("ciphertext failed authentication") from None


# -- time ----------------------------------------------------------------------

class SimClock:
    """Manually advanced clock in whole seconds; never runs backwards."""

    def __init__(self, start: int = 1_700_000_000):
        self._t = start

    def now(self) -> int:
        return self._t

    def advance(self, secs: int) -> int:
        if secs < 0:
            raise ValueError("clock cannot run backwards")
        self._t += secs
        return self._t

    def set(self, t: int) -> None:
        if t < self._t:
            raise ValueError("clock cannot run backwards")
        self._t = t


class SystemClock:
    def now(self) -> int:
        return int(time.time())


def ts_bytes(t: int) -> bytes:
    return int_to_bytes(t, TS_SIZE)


def is_fresh(ts: int, now: int, window: int) -> bool:
    return abs(now - ts) <= window
