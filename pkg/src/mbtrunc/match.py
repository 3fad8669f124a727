"""Plaintext comparison. Scores are dissimilarities: lower means more alike."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import VECTOR_TYPES, BinaryVector, kind_key

SCORE_KINDS = ("float_sed", "int_sed", "hamming")


@dataclass(frozen=True)
class Score:
    value: float
    kind: str = "float_sed"

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.value < 0:
            raise ValueError("dissimilarity scores are non-negative")

    def __float__(self):
        return float(self.value)


def _pair(a, b):
    if isinstance(a, VECTOR_TYPES) and isinstance(b, VECTOR_TYPES):
        if kind_key(a) != kind_key(b):
            raise ValueError(f"cannot compare {kind_key(a)} with {kind_key(b)}")
    x = a.values if isinstance(a, VECTOR_TYPES) else np.asarray(a)
    y = b.values if isinstance(b, VECTOR_TYPES) else np.asarray(b)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return x, y


def sed(a, b) -> Score:
    """Squared Euclidean distance; exact integer arithmetic for integer kinds."""
    x, y = _pair(a, b)
    if x.dtype.kind == "f" or y.dtype.kind == "f":
        diff = x.astype(np.float64) - y.astype(np.float64)
        return Score(float(np.dot(diff, diff)), "float_sed")
    diff = x.astype(np.int64) - y.astype(np.int64)
    return Score(int(np.dot(diff, diff)), "int_sed")


def sed_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise SED of two equally shaped ``(n, d)`` arrays."""
    if x.dtype.kind in "iu" and y.dtype.kind in "iu":
        diff = x.astype(np.int64) - y.astype(np.int64)
    else:
        diff = x.astype(np.float64) - y.astype(np.float64)
    return np.einsum("ij,ij->i", diff, diff)


def hamming_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.count_nonzero(x != y, axis=-1)


def hamming(a: BinaryVector, b: BinaryVector) -> Score:
    x, y = _pair(a, b)
    for arr in (x, y):
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("hamming distance needs binary inputs")
    return Score(int(np.count_nonzero(x != y)), "hamming")


def score_fusion_sum(scores) -> Score:
    scores = list(scores)
    if not scores:
        raise ValueError("score fusion needs at least one score")
    kinds = {s.kind for s in scores}
    if len(kinds) != 1:
        raise ValueError(f"cannot fuse scores of kinds {sorted(kinds)}")
    return Score(sum(s.value for s in scores), scores[0].kind)


def decide(score, threshold: float) -> str:
    """``"accept"`` iff the dissimilarity is at most ``threshold``."""
    value = score.value if isinstance(score, Score) else score
    return "accept" if value <= threshold else "reject"
