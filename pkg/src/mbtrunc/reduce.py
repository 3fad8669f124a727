"""Training-free dimensionality reduction and feature-level fusion.

Every operator accepts either a typed vector from :mod:`mbtrunc.core` (and
returns the same kind) or a plain numpy array, in which case it works along
the last axis so a whole ``(n_templates, d)`` matrix is reduced in one call.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction as Rational
from typing import Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_MODALITIES,
    VECTOR_TYPES,
    BinaryVector,
    FeatureVector,
    Modality,
    QuantizedVector,
    Template,
    concat,
    kind_key,
    like,
    modality_name,
)

DEFAULT_RANGE = (-1.0, 1.0)


def _split(v):
    if isinstance(v, VECTOR_TYPES):
        return v, v.values
    return None, np.asarray(v)


def _check_divides(k: int, d: int, name: str):
    if k < 1 or d % k:
        raise ValueError(f"{name}={k} must be a positive divisor of the dimension d={d}")


def _next_pow2(n: int) -> int:
    q = 2
    while q < n:
        q *= 2
    return q


# -- pre-processing -------------------------------------------------------

def binarize(v, t: float = 0.0):
    """Map each element to 0 if it is below ``t`` and to 1 otherwise."""
    vec, x = _split(v)
    bits = (x >= t).astype(np.uint8)
    return BinaryVector(bits, modality=vec.modality) if vec is not None else bits


def quantize(v, q: int, value_range=DEFAULT_RANGE):
    """Equal-width quantization of each element to one of ``q`` levels.

    Inputs are clamped to ``value_range`` and scaled by ``q - 1`` before
    flooring, so the range endpoints map to levels 0 and ``q - 1``.
    """
    x_min, x_max = map(float, value_range)
    if not x_min < x_max:
        raise ValueError(f"degenerate quantization range [{x_min}, {x_max}]")
    q = int(q)
    if q < 2 or q & (q - 1):
        raise ValueError(f"q must be a power of two >= 2, got {q}")
    vec, x = _split(v)
    clamped = np.clip(x.astype(np.float64), x_min, x_max)
    scaled = (clamped - x_min) / (x_max - x_min) * (q - 1)
    levels = np.floor(scaled).astype(np.int64)
    # float rounding can cross a level boundary; settle those exactly
    near = np.abs(scaled - np.round(scaled)) <= 1e-9 * q
    if near.any():
        span = Rational(x_max) - Rational(x_min)
        flat_c, flat_l = clamped.reshape(-1), levels.reshape(-1)
        for j in np.flatnonzero(near.reshape(-1)):
            flat_l[j] = math.floor((Rational(float(flat_c[j])) - Rational(x_min)) * (q - 1) / span)
        levels = flat_l.reshape(levels.shape)
    if vec is not None:
        return QuantizedVector(levels, q=q, modality=vec.modality)
    return levels


# -- truncation -----------------------------------------------------------

def fraction_indices(d: int, k: int, i: int) -> np.ndarray:
    _check_divides(k, d, "k")
    if not 1 <= i <= k:
        raise ValueError(f"fraction index i={i} must lie in [1, {k}]")
    step = d // k
    return np.arange((i - 1) * step, i * step)


def interleave_indices(d: int, x: int) -> np.ndarray:
    _check_divides(x, d, "x")
    return np.arange(0, d, x)


def interleave_literal_indices(d: int, x: int) -> np.ndarray:
    """Indices ``floor(k (d-1)/(x-1))`` for ``k = 0..x-1``.

    This yields only ``x`` evenly spread positions, not ``d/x``; kept for
    reference next to :func:`interleave`, which is what the pipeline uses.
    """
    if x < 2:
        raise ValueError("literal interleaving needs x >= 2")
    k = np.arange(x)
    return (k * (d - 1)) // (x - 1)


def spaced_indices(d: int, length: int) -> np.ndarray:
    """``length`` evenly spaced positions ``floor(j d / length)``.

    Equals :func:`interleave_indices` whenever ``length`` divides ``d``.
    """
    if not 1 <= length <= d:
        raise ValueError(f"length {length} outside [1, {d}]")
    return (np.arange(length) * d) // length


def _take(v, idx):
    vec, x = _split(v)
    out = x[..., idx]
    return like(vec, out) if vec is not None else out


def fraction(v, k: int, i: int):
    """Contiguous ``i``-th of ``k`` equal slices (``i`` is 1-based)."""
    _, x = _split(v)
    return _take(v, fraction_indices(x.shape[-1], k, i))


def interleave(v, x: int):
    """Every ``x``-th element starting at offset 0; length ``d / x``."""
    _, arr = _split(v)
    return _take(v, interleave_indices(arr.shape[-1], x))


def interleave_literal(v, x: int):
    _, arr = _split(v)
    return _take(v, interleave_literal_indices(arr.shape[-1], x))


def segment(v, start: int, length: int):
    _, x = _split(v)
    d = x.shape[-1]
    if start < 0 or length < 1 or start + length > d:
        raise ValueError(f"segment [{start}, {start + length}) outside [0, {d})")
    return _take(v, np.arange(start, start + length))


def sum_fractions(v, k: int):
    """Element-wise sum of the ``k`` contiguous fractions of ``v``.

    For binary input each output element counts the active bits across
    fractions; the result is then a :class:`QuantizedVector` whose ``q`` is
    the smallest power of two that holds ``k + 1`` levels.
    """
    vec, x = _split(v)
    d = x.shape[-1]
    _check_divides(k, d, "k")
    summed = x.reshape(x.shape[:-1] + (k, d // k)).sum(axis=-2)
    if vec is None:
        return summed
    if k == 1:
        return vec
    if isinstance(vec, FeatureVector):
        return FeatureVector(summed, modality=vec.modality)
    top = k * (vec.q - 1)
    return QuantizedVector(summed.astype(np.int64), q=_next_pow2(top + 1), modality=vec.modality)


# -- plans ----------------------------------------------------------------

@dataclass(frozen=True)
class Binarize:
    threshold: float = 0.0

    def apply(self, v):
        return binarize(v, self.threshold)

    def to_dict(self):
        return {"kind": "binary", "threshold": self.threshold}


@dataclass(frozen=True)
class Levels:
    q: int
    value_range: tuple = DEFAULT_RANGE

    def __post_init__(self):
        if self.q < 2 or self.q & (self.q - 1):
            raise ValueError(f"q must be a power of two >= 2, got {self.q}")
        object.__setattr__(self, "value_range", tuple(map(float, self.value_range)))
        if not self.value_range[0] < self.value_range[1]:
            raise ValueError("degenerate quantization range")

    def apply(self, v):
        return quantize(v, self.q, self.value_range)

    def to_dict(self):
        return {"kind": "levels", "q": self.q, "range": list(self.value_range)}


@dataclass(frozen=True)
class Fraction:
    k: int
    i: int = 1

    def __post_init__(self):
        if self.k < 1 or not 1 <= self.i <= self.k:
            raise ValueError(f"invalid fraction k={self.k}, i={self.i}")

    def output_dim(self, d):
        _check_divides(self.k, d, "k")
        return d // self.k

    def indices(self, d):
        return fraction_indices(d, self.k, self.i)

    def apply(self, v):
        return fraction(v, self.k, self.i)

    def to_dict(self):
        return {"kind": "fraction", "k": self.k, "i": self.i}


@dataclass(frozen=True)
class Interleave:
    x: int

    def __post_init__(self):
        if self.x < 1:
            raise ValueError("interleave factor must be >= 1")

    def output_dim(self, d):
        _check_divides(self.x, d, "x")
        return d // self.x

    def indices(self, d):
        return interleave_indices(d, self.x)

    def apply(self, v):
        return interleave(v, self.x)

    def to_dict(self):
        return {"kind": "interleave", "x": self.x}


@dataclass(frozen=True)
class SumFractions:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def output_dim(self, d):
        _check_divides(self.k, d, "k")
        return d // self.k

    indices = None  # not an index selection

    def apply(self, v):
        return sum_fractions(v, self.k)

    def to_dict(self):
        return {"kind": "sum", "k": self.k}


@dataclass(frozen=True)
class ConcatFusion:
    order: tuple = DEFAULT_MODALITIES

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(Modality.parse(m) for m in self.order))

    def to_dict(self):
        return {"kind": "concat", "order": [modality_name(m) for m in self.order]}


@dataclass(frozen=True)
class ReductionPlan:
    """Declarative pipeline, always applied as quantize -> truncate -> fuse."""

    quantization: Optional[object] = None
    truncation: Optional[object] = None
    fusion: Optional[ConcatFusion] = None

    @property
    def integer_kind(self) -> bool:
        return self.quantization is not None

    def output_dim(self, d: int) -> int:
        return d if self.truncation is None else self.truncation.output_dim(d)

    def validate(self, d: int):
        self.output_dim(d)
        if isinstance(self.truncation, Fraction):
            fraction_indices(d, self.truncation.k, self.truncation.i)

    def selection(self, d: int):
        """Index subset kept by the truncation, or ``None`` for a sum plan."""
        if self.truncation is None:
            return np.arange(d)
        if isinstance(self.truncation, SumFractions):
            return None
        return self.truncation.indices(d)

    def transform(self, x):
        """Quantize then truncate a vector or a ``(..., d)`` array."""
        if self.quantization is not None:
            x = self.quantization.apply(x)
        if self.truncation is not None:
            x = self.truncation.apply(x)
        return x

    def to_dict(self) -> dict:
        return {
            "quantization": None if self.quantization is None else self.quantization.to_dict(),
            "truncation": None if self.truncation is None else self.truncation.to_dict(),
            "fusion": None if self.fusion is None else self.fusion.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ReductionPlan":
        unknown = set(doc) - {"quantization", "truncation", "fusion"}
        if unknown:
            raise ValueError(f"unknown plan fields: {sorted(unknown)}")
        return cls(
            quantization=_quant_from(doc.get("quantization")),
            truncation=_trunc_from(doc.get("truncation")),
            fusion=_fusion_from(doc.get("fusion")),
        )

    @classmethod
    def from_json(cls, text: str) -> "ReductionPlan":
        return cls.from_dict(json.loads(text))

    def describe(self) -> str:
        return self.to_json()


def _kind_of(doc):
    if doc is None or doc == "none":
        return None
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError(f"plan component needs a 'kind': {doc!r}")
    return doc["kind"]


def _quant_from(doc):
    kind = _kind_of(doc)
    if kind in (None, "none"):
        return None
    if kind == "binary":
        return Binarize(float(doc.get("threshold", 0.0)))
    if kind == "levels":
        return Levels(int(doc["q"]), tuple(doc.get("range", DEFAULT_RANGE)))
    raise ValueError(f"unknown quantization kind {kind!r}")


def _trunc_from(doc):
    kind = _kind_of(doc)
    if kind in (None, "none"):
        return None
    if kind == "fraction":
        return Fraction(int(doc["k"]), int(doc.get("i", 1)))
    if kind == "interleave":
        return Interleave(int(doc["x"]))
    if kind == "sum":
        return SumFractions(int(doc["k"]))
    raise ValueError(f"unknown truncation kind {kind!r}")


def _fusion_from(doc):
    kind = _kind_of(doc)
    if kind in (None, "none"):
        return None
    if kind == "concat":
        return ConcatFusion(tuple(doc.get("order", DEFAULT_MODALITIES)))
    raise ValueError(f"unknown fusion kind {kind!r}")


def apply_plan(t: Template, plan: ReductionPlan) -> Template:
    if plan.quantization is None and plan.truncation is None:
        return t
    plan.validate(t.dim)
    return Template(
        payload=plan.transform(t.payload),
        subject_id=t.subject_id,
        sample_index=t.sample_index,
        provenance=plan,
    )


def fuse_concat(templates, order: Sequence = DEFAULT_MODALITIES) -> Template:
    """Concatenate one subject-sample's per-modality templates in ``order``.

    ``templates`` is either a mapping modality -> Template or a sequence of
    templates whose payloads carry a modality tag.
    """
    if not isinstance(templates, dict):
        templates = {t.modality: t for t in templates}
    if len(templates) == 1:
        return next(iter(templates.values()))
    order = tuple(Modality.parse(m) for m in order)
    missing = [modality_name(m) for m in order if m not in templates]
    if missing:
        raise ValueError(f"missing modalities for fusion: {missing}")
    parts = [templates[m] for m in order]
    subject = {t.subject_id for t in parts}
    if len(subject) != 1:
        raise ValueError(f"cannot fuse templates of different subjects {sorted(subject)}")
    keys = {kind_key(t.payload) for t in parts}
    if len(keys) != 1:
        raise ValueError(f"cannot fuse mixed numeric kinds {sorted(keys)}")
    tag = "+".join(modality_name(m) for m in order)
    return Template(
        payload=concat([t.payload for t in parts], modality=tag),
        subject_id=parts[0].subject_id,
        sample_index=parts[0].sample_index,
        provenance=ConcatFusion(order),
    )
