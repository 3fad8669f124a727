"""Paillier cryptosystem over Z_{n^2} with generator g = n + 1.

Big-integer arithmetic goes through gmpy2 (GMP); values cross the public
API as plain Python ints.
"""

from __future__ import annotations

import hashlib
import math
import random
import secrets
from dataclasses import dataclass, field
from typing import Optional

import gmpy2
from gmpy2 import mpz

DEFAULT_BITS = 2048
MIN_BITS = 64
MAX_PRIME_ATTEMPTS = 100_000


class KeyGenError(RuntimeError):
    pass


class KeyMismatchError(ValueError):
    """Ciphertexts or templates under different public keys were combined."""


class KeyFileError(ValueError):
    """A key document is missing fields or is not valid hex."""


def make_rng(seed: Optional[int] = None):
    """Seeded ``random.Random`` for test mode, system entropy otherwise."""
    return random.Random(seed) if seed is not None else secrets.SystemRandom()


@dataclass(frozen=True)
class PublicKey:
    n: int
    bits: int = 0
    _n: mpz = field(init=False, repr=False, compare=False)
    _n_sq: mpz = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "_n", mpz(self.n))
        object.__setattr__(self, "_n_sq", mpz(self.n) * mpz(self.n))
        if not self.bits:
            object.__setattr__(self, "bits", self.n.bit_length())

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def n_sq(self) -> int:
        return int(self._n_sq)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(format(self.n, "x").encode()).hexdigest()[:16]

    def random_unit(self, rng) -> mpz:
        while True:
            r = rng.randrange(1, self.n)
            if math.gcd(r, self.n) == 1:
                return mpz(r)

    def raw_encrypt(self, m: int, rng) -> mpz:
        """Encrypt ``m`` and return the bare residue mod n^2."""
        m = int(m)
        if not 0 <= m < self.n:
            raise ValueError(f"plaintext {m} outside [0, n)")
        r = self.random_unit(rng)
        return (1 + mpz(m) * self._n) * gmpy2.powmod(r, self._n, self._n_sq) % self._n_sq

    def trivial_encrypt(self, m: int) -> mpz:
        """Deterministic encryption with randomness 1; (1 + m n) mod n^2."""
        return (1 + mpz(int(m) % self.n) * self._n) % self._n_sq

    def encode(self, v: int) -> int:
        """Map a signed integer with ``|v| < n/2`` into ``[0, n)``."""
        v = int(v)
        if 2 * abs(v) >= self.n:
            raise ValueError(f"|{v}| is too large for modulus of {self.bits} bits")
        return v % self.n

    def decode(self, m: int) -> int:
        """Centered lift of ``m`` back to a signed integer."""
        m = int(m) % self.n
        return m - self.n if 2 * m >= self.n else m

    def to_dict(self) -> dict:
        return {"n": format(self.n, "x"), "g": format(self.g, "x"), "bits": self.bits,
                "fingerprint": self.fingerprint}

    @classmethod
    def from_dict(cls, doc: dict) -> "PublicKey":
        try:
            pk = cls(int(doc["n"], 16), int(doc.get("bits", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise KeyFileError(f"not a public key document: {exc}") from exc
        if "g" in doc and int(doc["g"], 16) != pk.g:
            raise ValueError("only g = n + 1 is supported")
        if "fingerprint" in doc and doc["fingerprint"] != pk.fingerprint:
            raise KeyMismatchError("public key fingerprint does not match its modulus")
        return pk


@dataclass(frozen=True)
class SecretKey:
    public: PublicKey
    p: int
    q: int

    def __post_init__(self):
        p, q = mpz(self.p), mpz(self.q)
        # CRT decryption constants
        object.__setattr__(self, "_p_sq", p * p)
        object.__setattr__(self, "_q_sq", q * q)
        object.__setattr__(self, "_hp", self._h(p, self._p_sq))
        object.__setattr__(self, "_hq", self._h(q, self._q_sq))
        object.__setattr__(self, "_q_inv", gmpy2.invert(q, p))

    def _h(self, x, x_sq):
        g = mpz(self.public.g)
        return gmpy2.invert((gmpy2.powmod(g, x - 1, x_sq) - 1) // x, x)

    @property
    def lam(self) -> int:
        return (self.p - 1) * (self.q - 1)

    def raw_decrypt(self, c) -> int:
        c = mpz(c)
        p, q = mpz(self.p), mpz(self.q)
        mp = (gmpy2.powmod(c, p - 1, self._p_sq) - 1) // p * self._hp % p
        mq = (gmpy2.powmod(c, q - 1, self._q_sq) - 1) // q * self._hq % q
        u = (mp - mq) * self._q_inv % p
        return int(mq + u * q)

    def to_dict(self) -> dict:
        return {"p": format(self.p, "x"), "q": format(self.q, "x"),
                "fingerprint": self.public.fingerprint}

    @classmethod
    def from_dict(cls, doc: dict) -> "SecretKey":
        try:
            p, q = int(doc["p"], 16), int(doc["q"], 16)
        except (KeyError, TypeError, ValueError) as exc:
            raise KeyFileError(f"not a secret key document: {exc}") from exc
        return cls(PublicKey(p * q), p, q)


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    secret: SecretKey

    @property
    def bits(self) -> int:
        return self.public.bits


@dataclass(frozen=True)
class Ciphertext:
    value: int
    public: PublicKey = field(repr=False)

    def __post_init__(self):
        v = int(self.value)
        if not 0 < v < self.public.n_sq:
            raise ValueError("ciphertext outside (0, n^2)")
        object.__setattr__(self, "value", v)

    @property
    def fingerprint(self) -> str:
        return self.public.fingerprint


def keypair_from_primes(p: int, q: int) -> KeyPair:
    p, q = int(p), int(q)
    if p == q:
        raise ValueError("p and q must differ")
    for x in (p, q):
        if not gmpy2.is_prime(x):
            raise ValueError(f"{x} is not prime")
    n = p * q
    if math.gcd(n, (p - 1) * (q - 1)) != 1:
        raise ValueError("gcd(pq, (p-1)(q-1)) must be 1")
    pk = PublicKey(n)
    return KeyPair(pk, SecretKey(pk, p, q))


def _random_prime(bits: int, rng) -> int:
    for _ in range(MAX_PRIME_ATTEMPTS):
        c = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if gmpy2.is_prime(c, 40):
            return c
    raise KeyGenError(f"no {bits}-bit prime found after {MAX_PRIME_ATTEMPTS} candidates")


def keygen(bits: int = DEFAULT_BITS, seed: Optional[int] = None) -> KeyPair:
    """Generate a key pair with an exactly ``bits``-bit modulus.

    A fixed ``seed`` makes the result reproducible (test mode only).
    """
    if bits < MIN_BITS or bits % 2:
        raise ValueError(f"modulus size must be an even number of bits >= {MIN_BITS}")
    rng = make_rng(seed)
    for _ in range(64):
        p = _random_prime(bits // 2, rng)
        q = _random_prime(bits // 2, rng)
        if p == q or math.gcd(p * q, (p - 1) * (q - 1)) != 1:
            continue
        if (p * q).bit_length() == bits:
            return keypair_from_primes(p, q)
    raise KeyGenError("could not find a suitable prime pair")


def encrypt(pk: PublicKey, m: int, rng=None) -> Ciphertext:
    rng = make_rng() if rng is None else rng
    return Ciphertext(int(pk.raw_encrypt(m, rng)), pk)


def decrypt(sk: SecretKey, c: Ciphertext) -> int:
    if c.fingerprint != sk.public.fingerprint:
        raise KeyMismatchError("ciphertext was not produced under this key")
    return sk.raw_decrypt(c.value)


def decrypt_signed(sk: SecretKey, c: Ciphertext) -> int:
    return sk.public.decode(decrypt(sk, c))


def _same_key(*cs: Ciphertext) -> PublicKey:
    fps = {c.fingerprint for c in cs}
    if len(fps) != 1:
        raise KeyMismatchError("ciphertexts belong to different keys")
    return cs[0].public


def he_add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Ciphertext of ``(a + b) mod n``."""
    pk = _same_key(c1, c2)
    return Ciphertext(int(mpz(c1.value) * mpz(c2.value) % pk._n_sq), pk)


def he_scalar_mul(c: Ciphertext, s: int) -> Ciphertext:
    """Ciphertext of ``(a * s) mod n``; negative ``s`` works modulo n."""
    pk = c.public
    return Ciphertext(int(gmpy2.powmod(mpz(c.value), int(s) % pk.n, pk._n_sq)), pk)
