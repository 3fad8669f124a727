"""Reproducible synthetic multi-biometric embeddings.

Each virtual subject gets one class mean per modality, drawn from an
isotropic standard normal and scaled to unit length. A sample is

    l2_normalize(mu + s_m * (sqrt(1 - beta) * eps + sqrt(beta / r) * G_m @ w))

with ``s_m = sigma_m + degradation_m``, ``eps`` an isotropic standard normal
residual, ``G_m`` a fixed ``d x r`` standard normal basis per modality and
``w`` a standard normal vector in R^r. The low-rank term models within-class
variation shared by all coordinates (pose, pressure, occlusion); it is what
makes a single modality saturate as dimensions are added while independent
modalities keep adding information. ``beta = 0`` gives a purely isotropic
model.

Random streams
--------------
All draws come from numpy's PCG64 bit generator seeded by
``SeedSequence(seed, spawn_key=key)`` where ``key`` is

* ``(0, modality_tag)`` for the basis ``G_m``,
* ``(1, modality_tag, subject)`` for the class mean,
* ``(2, modality_tag, subject, sample)`` for one sample,

and ``modality_tag = crc32(modality name)``. Gaussians are produced by the
inverse normal CDF applied to 53-bit uniforms on the open unit interval, so
no draw depends on rejection loops.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import zlib
from dataclasses import dataclass, field, asdict
from typing import Mapping, Optional

import numpy as np
from scipy.special import ndtri

from .core import (
    DEFAULT_DIM,
    DEFAULT_MODALITIES,
    FeatureVector,
    Modality,
    MultiDataset,
    Subject,
    Template,
    modality_name,
)

log = logging.getLogger(__name__)

# Chosen so single-modality full-length float EERs of the default
# 200-subject dataset sit around 0.5-1.5 % with a spread across modalities.
DEFAULT_SIGMA = {"Face": 0.031, "Fingerprint": 0.036, "Iris": 0.034}
DEFAULT_DEGRADATION = {"Face": 0.004, "Fingerprint": 0.0, "Iris": 0.0}
DEFAULT_NUISANCE_RANK = 8
DEFAULT_NUISANCE_SHARE = 0.8

_2_53 = float(2**53)


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal draws via inverse CDF of open-interval uniforms."""
    u = (rng.integers(0, 2**53, size=size, dtype=np.uint64).astype(np.float64) + 0.5) / _2_53
    return ndtri(u)


def modality_tag(m) -> int:
    return zlib.crc32(modality_name(m).encode("utf-8"))


def _stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _per_modality(value, modalities, name, default=None):
    if value is None:
        value = default
    if isinstance(value, Mapping):
        out = {}
        for m in modalities:
            key = modality_name(m)
            if key not in value:
                raise ValueError(f"{name} missing for modality {key}")
            out[key] = float(value[key])
        return out
    return {modality_name(m): float(value) for m in modalities}


@dataclass(frozen=True)
class SynthConfig:
    subjects: int = 200
    samples_per_modality: int = 4
    dim: int = DEFAULT_DIM
    sigma: Mapping = field(default_factory=lambda: dict(DEFAULT_SIGMA))
    degradation: Mapping = field(default_factory=lambda: dict(DEFAULT_DEGRADATION))
    seed: int = 0
    modalities: tuple = DEFAULT_MODALITIES
    nuisance_rank: int = DEFAULT_NUISANCE_RANK
    nuisance_share: float = DEFAULT_NUISANCE_SHARE

    def __post_init__(self):
        mods = tuple(Modality.parse(m) for m in self.modalities)
        object.__setattr__(self, "modalities", mods)
        object.__setattr__(self, "sigma", _per_modality(self.sigma, mods, "sigma"))
        object.__setattr__(
            self, "degradation", _per_modality(self.degradation, mods, "degradation", 0.0)
        )
        if self.subjects < 2:
            raise ValueError("need at least 2 subjects")
        if self.samples_per_modality < 2:
            raise ValueError("need at least 2 samples per modality")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not mods:
            raise ValueError("need at least one modality")
        if any(s < 0 for s in self.sigma.values()):
            raise ValueError("sigma must be non-negative")
        if any(g < 0 for g in self.degradation.values()):
            raise ValueError("degradation must be non-negative")
        if not 0.0 <= self.nuisance_share <= 1.0:
            raise ValueError("nuisance_share must lie in [0, 1]")
        if self.nuisance_rank < 1:
            raise ValueError("nuisance_rank must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def noise_scale(self, m) -> float:
        key = modality_name(m)
        return self.sigma[key] + self.degradation[key]

    def replace(self, **changes) -> "SynthConfig":
        doc = self.to_dict()
        doc.update(changes)
        return SynthConfig.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["modalities"] = [modality_name(m) for m in self.modalities]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        doc = dict(doc)
        if "modalities" in doc:
            doc["modalities"] = tuple(doc["modalities"])
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "SynthConfig":
        return cls.from_dict(json.loads(text))


# BLAS kernels may change summation order between builds; these fixed-order
# reductions keep the output bit-identical across platforms.
def _norm(x: np.ndarray) -> float:
    return math.sqrt(math.fsum(x * x))


def _combine(basis: np.ndarray, w: np.ndarray) -> np.ndarray:
    acc = basis[:, 0] * w[0]
    for k in range(1, w.size):
        acc = acc + basis[:, k] * w[k]
    return acc


def generate_modality(config: SynthConfig, modality, seed: Optional[int] = None) -> np.ndarray:
    """Samples for one modality as an array ``(subjects, samples, dim)``."""
    seed = config.seed if seed is None else seed
    tag = modality_tag(modality)
    d, r = config.dim, config.nuisance_rank
    beta = config.nuisance_share
    scale = config.noise_scale(modality)
    basis = standard_normal(_stream(seed, 0, tag), (d, r))
    out = np.empty((config.subjects, config.samples_per_modality, d))
    for s in range(config.subjects):
        mu = standard_normal(_stream(seed, 1, tag, s), d)
        mu /= _norm(mu)
        for j in range(config.samples_per_modality):
            draws = standard_normal(_stream(seed, 2, tag, s, j), d + r)
            eps, w = draws[:d], draws[d:]
            noise = np.sqrt(1.0 - beta) * eps + np.sqrt(beta / r) * _combine(basis, w)
            x = mu + scale * noise
            out[s, j] = x / _norm(x)
    return out


def subject_id(index: int) -> str:
    return f"S{index:05d}"


def generate(config: SynthConfig) -> MultiDataset:
    """Build the dataset; identical ``config`` gives bit-identical output."""
    per_mod = {m: generate_modality(config, m) for m in config.modalities}
    subjects = []
    for s in range(config.subjects):
        sid = subject_id(s)
        temps = {
            m: tuple(
                Template(FeatureVector(per_mod[m][s, j], modality=m, normalized=True), sid, j)
                for j in range(config.samples_per_modality)
            )
            for m in config.modalities
        }
        subjects.append(Subject(sid, temps))
    return MultiDataset(tuple(subjects), config.modalities)


# -- comparison protocol ---------------------------------------------------

@dataclass(frozen=True)
class ComparisonSet:
    """Mated and non-mated pairs as index arrays.

    ``mated`` rows are ``(subject, tuple_a, tuple_b)`` with ``tuple_a < tuple_b``;
    ``non_mated`` rows are ``(subject_a, subject_b)`` with ``a < b``, each
    referring to the subject's first tuple. Subjects are positions in
    ``subject_ids``.
    """

    mated: np.ndarray
    non_mated: np.ndarray
    subject_ids: tuple
    tuple_counts: tuple

    @property
    def counts(self):
        return len(self.mated), len(self.non_mated)

    @property
    def degenerate(self) -> bool:
        return len(self.mated) == 0 or len(self.non_mated) == 0

    def mated_refs(self):
        return [((self.subject_ids[s], a), (self.subject_ids[s], b)) for s, a, b in self.mated]

    def non_mated_refs(self):
        return [((self.subject_ids[a], 0), (self.subject_ids[b], 0)) for a, b in self.non_mated]

    def sample_pairs(self):
        """Both pair lists as ``(subject, tuple)`` index arrays ``(n, 2, 2)``."""
        m = np.stack(
            [np.stack([self.mated[:, 0], self.mated[:, 1]], 1),
             np.stack([self.mated[:, 0], self.mated[:, 2]], 1)], 1
        ) if len(self.mated) else np.empty((0, 2, 2), dtype=np.int64)
        zeros = np.zeros(len(self.non_mated), dtype=np.int64)
        n = np.stack(
            [np.stack([self.non_mated[:, 0], zeros], 1),
             np.stack([self.non_mated[:, 1], zeros], 1)], 1
        ) if len(self.non_mated) else np.empty((0, 2, 2), dtype=np.int64)
        return m, n


def enumerate_comparisons(ds: MultiDataset, limit_by_scarcest: bool = True) -> ComparisonSet:
    """All within-subject tuple pairs and all cross-subject first-tuple pairs.

    A subject contributes as many multi-modal tuples as its scarcest modality
    holds templates. With ``limit_by_scarcest=False`` every subject must hold
    the same number of templates in every modality.
    """
    counts = []
    for s in ds.subjects:
        per_mod = [len(s.templates[m]) for m in ds.modalities]
        if not limit_by_scarcest and len(set(per_mod)) > 1:
            raise ValueError(f"subject {s.subject_id} has unequal template counts {per_mod}")
        n = min(per_mod)
        if n < 1:
            raise ValueError(f"subject {s.subject_id} has no usable sample tuple")
        counts.append(n)
    mated = [
        (si, a, b)
        for si, n in enumerate(counts)
        for a, b in itertools.combinations(range(n), 2)
    ]
    non_mated = list(itertools.combinations(range(len(counts)), 2))
    if not non_mated:
        log.warning("single-subject dataset: no non-mated comparisons")
    return ComparisonSet(
        mated=np.asarray(mated, dtype=np.int64).reshape(-1, 3),
        non_mated=np.asarray(non_mated, dtype=np.int64).reshape(-1, 2),
        subject_ids=tuple(s.subject_id for s in ds.subjects),
        tuple_counts=tuple(counts),
    )


# -- calibration ------------------------------------------------------------

class CalibrationError(RuntimeError):
    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


HELD_OUT_OFFSET = 0x9E3779B97F4A7C15


def single_modality_eer(config: SynthConfig, modality, sigma: float, seed: int) -> float:
    """Full-length float EER of one modality generated with noise ``sigma``."""
    from .evaluate import ScoreSet, eer
    from .match import sed_rows

    cfg = config.replace(sigma={**config.sigma, modality_name(modality): sigma},
                         degradation={**config.degradation, modality_name(modality): 0.0})
    x = generate_modality(cfg, modality, seed=seed)
    s, j, d = x.shape
    ia, ib = np.triu_indices(j, 1)
    mated = sed_rows(x[:, ia].reshape(-1, d), x[:, ib].reshape(-1, d))
    sa, sb = np.triu_indices(s, 1)
    first = x[:, 0]
    non = sed_rows(first[sa], first[sb])
    return eer(ScoreSet(mated, non)).eer


def calibrate(target_eer_range, config: Optional[SynthConfig] = None,
              bounds=(0.0, 1.0), max_iter: int = 40) -> dict:
    """Per-modality noise scale whose full-length float EER lands in range.

    Bisection on the total noise scale ``sigma + degradation`` using a
    held-out dataset (seed offset from ``config.seed``); the returned sigma
    subtracts the modality's fixed degradation again.

    Raises:
      ValueError: for an invalid target range.
      CalibrationError: if no scale within ``bounds`` reaches the range; the
        error carries the achieved ``(sigma, eer)`` bracket.
    """
    lo, hi = map(float, target_eer_range)
    if not 0.0 < lo < hi < 0.5:
        raise ValueError("target range must satisfy 0 < lo < hi < 0.5")
    config = SynthConfig() if config is None else config
    seed = (int(config.seed) + HELD_OUT_OFFSET) % 2**64
    result = {}
    for m in config.modalities:
        a, b = map(float, bounds)
        e_a = single_modality_eer(config, m, a, seed)
        e_b = single_modality_eer(config, m, b, seed)
        found = None
        if lo <= e_a <= hi:
            found = a
        elif lo <= e_b <= hi:
            found = b
        elif e_b < lo or e_a > hi:
            raise CalibrationError(
                f"{modality_name(m)}: EER range [{e_a:.4f}, {e_b:.4f}] over sigma "
                f"[{a}, {b}] misses target [{lo}, {hi}]",
                ((a, e_a), (b, e_b)),
            )
        for _ in range(max_iter):
            if found is not None:
                break
            mid = 0.5 * (a + b)
            e_mid = single_modality_eer(config, m, mid, seed)
            log.debug("calibrate %s sigma=%.6f eer=%.5f", modality_name(m), mid, e_mid)
            if lo <= e_mid <= hi:
                found = mid
            elif e_mid < lo:
                a, e_a = mid, e_mid
            else:
                b, e_b = mid, e_mid
        if found is None:
            raise CalibrationError(
                f"{modality_name(m)}: bisection stalled between EER {e_a:.4f} and {e_b:.4f}",
                ((a, e_a), (b, e_b)),
            )
        result[modality_name(m)] = max(found - config.degradation[modality_name(m)], 0.0)
    return result
