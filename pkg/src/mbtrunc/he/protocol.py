"""Encrypted squared Euclidean distance with a plaintext probe.

Enrollment stores ``Enc(y_i)`` for every element plus ``Enc(sum y_i^2)``.
At comparison time the server combines them with the probe ``x`` as

    Enc(sum x_i^2) * prod Enc(y_i)^(x_i) ^ (-2) * Enc(sum y_i^2)

which decrypts to ``sum (x_i - y_i)^2``. Only the public key, ciphertexts
and the plaintext probe are touched on this path.

When a strict subset of indices is compared (fractions, interleaving), the
enrolled squared norm no longer applies; the subset norm is rebuilt from
stored ``Enc(y_i^2)``. Binary templates need none since ``y_i^2 = y_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import gmpy2
import numpy as np
from gmpy2 import mpz

from ..core import VECTOR_TYPES, BinaryVector, FeatureVector, QuantizedVector
from .paillier import Ciphertext, KeyMismatchError, PublicKey, make_rng


@dataclass(frozen=True, eq=False)
class EncryptedTemplate:
    elementwise: tuple
    norm_sq: int
    dim: int
    q: int
    fingerprint: str
    squares: Optional[tuple] = None

    def __post_init__(self):
        if len(self.elementwise) != self.dim:
            raise ValueError("elementwise ciphertext count does not match dim")
        if self.squares is not None and len(self.squares) != self.dim:
            raise ValueError("squared ciphertext count does not match dim")

    @property
    def supports_subsets(self) -> bool:
        return self.q == 2 or self.squares is not None

    def __eq__(self, other):
        return (
            isinstance(other, EncryptedTemplate)
            and (self.dim, self.q, self.fingerprint) == (other.dim, other.q, other.fingerprint)
            and list(map(int, self.elementwise)) == list(map(int, other.elementwise))
            and int(self.norm_sq) == int(other.norm_sq)
            and (self.squares is None) == (other.squares is None)
            and (self.squares is None or list(map(int, self.squares)) == list(map(int, other.squares)))
        )


def _levels(v, q: Optional[int]):
    if isinstance(v, FeatureVector):
        raise TypeError("encrypted matching needs quantized or binary templates")
    if isinstance(v, BinaryVector):
        return v.bits.astype(np.int64), 2
    if isinstance(v, QuantizedVector):
        return v.levels, v.q
    arr = np.asarray(v)
    if arr.dtype.kind == "f":
        raise TypeError("encrypted matching needs integer-valued templates")
    if q is None:
        raise ValueError("q is required for raw integer arrays")
    return arr.astype(np.int64), int(q)


def enroll_encrypted(pk: PublicKey, y, q: Optional[int] = None, with_squares: bool = False,
                     rng=None) -> EncryptedTemplate:
    """Encrypt a quantized or binary template element by element.

    Args:
      pk: public key.
      y: QuantizedVector, BinaryVector, or an integer array (then pass ``q``).
      q: value bound for raw arrays; elements must lie in ``[0, q-1]``.
      with_squares: also store ``Enc(y_i^2)`` so strict index subsets can be
        compared later. Ignored for binary templates.
      rng: randomness source; a seeded ``random.Random`` gives reproducible
        ciphertexts.
    """
    levels, q = _levels(y, q)
    if levels.ndim != 1 or levels.size == 0:
        raise ValueError("template must be a non-empty 1-D vector")
    if levels.min() < 0 or levels.max() > q - 1:
        raise ValueError(f"template elements must lie in [0, {q - 1}]")
    rng = make_rng() if rng is None else rng
    ys = [int(v) for v in levels]
    elementwise = tuple(pk.raw_encrypt(v, rng) for v in ys)
    norm_sq = pk.raw_encrypt(sum(v * v for v in ys), rng)
    squares = None
    if with_squares and q > 2:
        squares = tuple(pk.raw_encrypt(v * v, rng) for v in ys)
    return EncryptedTemplate(elementwise, norm_sq, len(ys), q, pk.fingerprint, squares)


def _selection(selection, dim):
    if selection is None:
        return None
    idx = np.asarray(selection, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("empty selection")
    if idx.min() < 0 or idx.max() >= dim:
        raise ValueError(f"selection outside [0, {dim})")
    if np.unique(idx).size != idx.size:
        raise ValueError("selection contains repeated indices")
    return idx


def encrypted_sed(pk: PublicKey, x, enc: EncryptedTemplate, selection=None) -> Ciphertext:
    """Ciphertext of the SED between probe ``x`` and the enrolled template.

    ``selection`` restricts the comparison to an index subset of the
    enrolled template. The probe is either full length (it is restricted the
    same way) or already restricted to ``len(selection)`` elements.
    """
    if pk.fingerprint != enc.fingerprint:
        raise KeyMismatchError("template was enrolled under a different key")
    if isinstance(x, VECTOR_TYPES):
        if (x.q if not isinstance(x, FeatureVector) else None) != enc.q:
            raise ValueError(f"probe kind does not match enrolled q={enc.q}")
    xs, _ = _levels(x, enc.q)
    if xs.size and (xs.min() < 0 or xs.max() > enc.q - 1):
        raise ValueError(f"probe elements must lie in [0, {enc.q - 1}]")
    idx = _selection(selection, enc.dim)
    full = idx is None or (idx.size == enc.dim and np.array_equal(idx, np.arange(enc.dim)))
    if idx is None:
        idx = np.arange(enc.dim)
    if xs.size == enc.dim:
        xs = xs[idx]
    elif xs.size != idx.size:
        raise ValueError(f"probe has {xs.size} elements; expected {enc.dim} or {idx.size}")

    n_sq = pk._n_sq
    cts = enc.elementwise
    # prod_i Enc(y_i)^(x_i), grouped by probe value to keep exponents small
    cross = mpz(1)
    for value in np.unique(xs):
        if value == 0:
            continue
        group = mpz(1)
        for j in idx[xs == value]:
            group = group * cts[j] % n_sq
        cross = cross * (group if value == 1 else gmpy2.powmod(group, int(value), n_sq)) % n_sq
    minus_two_cross = gmpy2.powmod(gmpy2.invert(cross, n_sq), 2, n_sq)

    if full:
        norm = mpz(enc.norm_sq)
    else:
        source = cts if enc.q == 2 else enc.squares
        if source is None:
            raise ValueError("subset matching needs a template enrolled with_squares=True")
        norm = mpz(1)
        for j in idx:
            norm = norm * source[j] % n_sq
    probe_norm = pk.trivial_encrypt(int(np.dot(xs, xs)))
    return Ciphertext(int(probe_norm * minus_two_cross % n_sq * norm % n_sq), pk)
