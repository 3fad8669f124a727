"""Vector, template and dataset types shared across the package.

All vectors wrap a read-only 1-D numpy array. Three numeric kinds exist:

* :class:`FeatureVector` -- real-valued (float64) embedding coordinates,
* :class:`QuantizedVector` -- integer levels in ``[0, q-1]`` with ``q = 2**l``,
* :class:`BinaryVector` -- bits in ``{0, 1}``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence, Union

import numpy as np

DEFAULT_DIM = 512
NORMALIZED_MEAN_TOL = 0.1


def normalized_mean_tol(dim: int) -> float:
    """Allowed |mean| of a normalized vector; widened for short vectors.

    The mean of a random unit vector has spread about 1/dim, so short
    vectors get a six-sigma bound instead of the fixed tolerance.
    """
    return max(NORMALIZED_MEAN_TOL, 6.0 / dim)


class Modality(str, enum.Enum):
    FACE = "Face"
    FINGERPRINT = "Fingerprint"
    IRIS = "Iris"

    @classmethod
    def parse(cls, value: "Modality | str") -> "Modality | str":
        """Return the enum member for a known name, else the string tag itself."""
        if isinstance(value, cls):
            return value
        for member in cls:
            if value.lower() in (member.value.lower(), member.name.lower()):
                return member
        return str(value)


DEFAULT_MODALITIES = (Modality.FACE, Modality.FINGERPRINT, Modality.IRIS)


def modality_name(m: "Modality | str") -> str:
    return m.value if isinstance(m, Modality) else str(m)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


def _is_power_of_two(q: int) -> bool:
    return q >= 2 and (q & (q - 1)) == 0


@dataclass(frozen=True, eq=False)
class FeatureVector:
    elements: np.ndarray
    modality: "Modality | str | None" = None
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.elements, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("feature vector must be a non-empty 1-D sequence")
        tol = normalized_mean_tol(arr.size)
        if self.normalized and abs(float(arr.mean())) > tol:
            raise ValueError(
                f"vector flagged normalized but mean {arr.mean():.3g} exceeds {tol:.3g}"
            )
        object.__setattr__(self, "elements", _frozen(arr))

    kind = "float"

    @property
    def dim(self) -> int:
        return self.elements.size

    @property
    def values(self) -> np.ndarray:
        return self.elements

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        return (
            isinstance(other, FeatureVector)
            and self.modality == other.modality
            and np.array_equal(self.elements, other.elements)
        )

    def __repr__(self):
        return f"FeatureVector(dim={self.dim}, modality={self.modality!r})"


@dataclass(frozen=True, eq=False)
class QuantizedVector:
    levels: np.ndarray
    q: int
    modality: "Modality | str | None" = None

    def __post_init__(self):
        if not _is_power_of_two(int(self.q)):
            raise ValueError(f"q must be a power of two >= 2, got {self.q}")
        arr = np.asarray(self.levels)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("quantized vector must be a non-empty 1-D sequence")
        if arr.dtype.kind == "f":
            if not np.all(arr == np.floor(arr)):
                raise ValueError("quantized levels must be integers")
        arr = arr.astype(np.int64)
        if arr.min() < 0 or arr.max() > self.q - 1:
            raise ValueError(f"levels must lie in [0, {self.q - 1}]")
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "levels", _frozen(arr))

    kind = "quantized"

    @property
    def dim(self) -> int:
        return self.levels.size

    @property
    def values(self) -> np.ndarray:
        return self.levels

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        return (
            isinstance(other, QuantizedVector)
            and self.q == other.q
            and self.modality == other.modality
            and np.array_equal(self.levels, other.levels)
        )

    def __repr__(self):
        return f"QuantizedVector(dim={self.dim}, q={self.q}, modality={self.modality!r})"


@dataclass(frozen=True, eq=False)
class BinaryVector:
    bits: np.ndarray
    modality: "Modality | str | None" = None

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("binary vector must be a non-empty 1-D sequence")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("binary vector elements must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(arr.astype(np.uint8)))

    kind = "binary"
    q = 2

    @property
    def dim(self) -> int:
        return self.bits.size

    @property
    def values(self) -> np.ndarray:
        return self.bits

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        return (
            isinstance(other, BinaryVector)
            and self.modality == other.modality
            and np.array_equal(self.bits, other.bits)
        )

    def __repr__(self):
        return f"BinaryVector(dim={self.dim}, modality={self.modality!r})"


Vector = Union[FeatureVector, QuantizedVector, BinaryVector]
VECTOR_TYPES = (FeatureVector, QuantizedVector, BinaryVector)


def like(template: Vector, values: np.ndarray, modality: Any = "keep") -> Vector:
    """Build a vector of the same numeric kind as ``template`` around ``values``."""
    mod = template.modality if modality == "keep" else modality
    if isinstance(template, FeatureVector):
        return FeatureVector(values, modality=mod)
    if isinstance(template, BinaryVector):
        return BinaryVector(values, modality=mod)
    return QuantizedVector(values, q=template.q, modality=mod)


def kind_key(v: Vector) -> tuple:
    """Numeric kind used for compatibility checks (quantized kinds carry q)."""
    if isinstance(v, QuantizedVector):
        return ("quantized", v.q)
    return (v.kind,)


@dataclass(frozen=True)
class Template:
    payload: Vector
    subject_id: str
    sample_index: int = 0
    provenance: Any = "raw"

    def __post_init__(self):
        if not isinstance(self.payload, VECTOR_TYPES):
            raise TypeError(f"unsupported payload type {type(self.payload).__name__}")
        if int(self.sample_index) < 0:
            raise ValueError("sample_index must be non-negative")
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "sample_index", int(self.sample_index))

    @property
    def dim(self) -> int:
        return self.payload.dim

    @property
    def modality(self):
        return self.payload.modality


@dataclass(frozen=True)
class Subject:
    subject_id: str
    templates: dict = field(default_factory=dict)  # modality -> tuple[Template, ...]

    def tuple_count(self) -> int:
        """Number of complete multi-modal sample tuples for this subject."""
        return min((len(t) for t in self.templates.values()), default=0)


@dataclass(frozen=True)
class MultiDataset:
    subjects: tuple
    modalities: tuple

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "modalities", tuple(self.modalities))
        dims = {}
        for s in self.subjects:
            for m in self.modalities:
                temps = s.templates.get(m, ())
                if not temps:
                    raise ValueError(f"subject {s.subject_id} has no {modality_name(m)} template")
                for t in temps:
                    if dims.setdefault(m, t.dim) != t.dim:
                        raise ValueError(f"non-uniform {modality_name(m)} dimension")
        object.__setattr__(self, "_dims", dims)

    def dim(self, modality) -> int:
        return self._dims[modality]

    def templates(self, modality) -> list:
        return [t for s in self.subjects for t in s.templates[modality]]

    def __len__(self):
        return sum(len(s.templates[m]) for s in self.subjects for m in self.modalities)


def concat(parts: Sequence[Vector], modality: Any = None) -> Vector:
    """Concatenate vectors of one numeric kind, keeping element order.

    Raises:
      ValueError: if ``parts`` is empty or mixes numeric kinds (or q values).
    """
    parts = list(parts)
    if not parts:
        raise ValueError("concat needs at least one part")
    key = kind_key(parts[0])
    for p in parts[1:]:
        if kind_key(p) != key:
            raise ValueError(f"cannot concatenate {kind_key(p)} with {key}")
    if len(parts) == 1:
        return parts[0]
    values = np.concatenate([p.values for p in parts])
    return like(parts[0], values, modality=modality)


def l2_normalize(v: FeatureVector) -> FeatureVector:
    norm = float(np.linalg.norm(v.elements))
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return FeatureVector(v.elements / norm, modality=v.modality)


def as_values(v: "Vector | Iterable") -> np.ndarray:
    return v.values if isinstance(v, VECTOR_TYPES) else np.asarray(v)
