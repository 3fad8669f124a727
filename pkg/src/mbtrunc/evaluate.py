"""Score collection, DET/EER metrics and the table-producing experiment runner."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Modality, MultiDataset, modality_name
from .match import sed_rows
from .reduce import (
    Binarize,
    ConcatFusion,
    Fraction,
    Interleave,
    ReductionPlan,
    SumFractions,
    _next_pow2,
    spaced_indices,
    sum_fractions,
)
from .synth import ComparisonSet, SynthConfig, enumerate_comparisons, generate

log = logging.getLogger(__name__)

DEFAULT_GRID = (16, 32, 64, 128, 256, 512)
ALL = "All"


@dataclass(frozen=True)
class ScoreSet:
    """Dissimilarity scores of mated and non-mated comparisons."""

    mated_scores: np.ndarray
    non_mated_scores: np.ndarray
    polarity: str = "dissimilarity"

    def __post_init__(self):
        object.__setattr__(self, "mated_scores", np.asarray(self.mated_scores))
        object.__setattr__(self, "non_mated_scores", np.asarray(self.non_mated_scores))

    def _check(self):
        if self.mated_scores.size == 0 or self.non_mated_scores.size == 0:
            raise ValueError("both mated and non-mated scores are required")


@dataclass(frozen=True)
class DetCurve:
    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.fmr.tolist(), self.fnmr.tolist()))

    def __len__(self):
        return self.thresholds.size


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold_at_eer: float


def det_curve(s: ScoreSet) -> DetCurve:
    """FMR/FNMR at every distinct score plus the -inf/+inf sentinels.

    A comparison is accepted when its score is <= the threshold, so
    FMR(t) = share of non-mated <= t and FNMR(t) = share of mated > t.
    """
    s._check()
    mated = np.sort(np.asarray(s.mated_scores, dtype=np.float64))
    non = np.sort(np.asarray(s.non_mated_scores, dtype=np.float64))
    thr = np.concatenate([[-np.inf], np.unique(np.concatenate([mated, non])), [np.inf]])
    fmr = np.searchsorted(non, thr, side="right") / non.size
    fnmr = 1.0 - np.searchsorted(mated, thr, side="right") / mated.size
    return DetCurve(thr, fmr, fnmr)


def eer(s: ScoreSet) -> EerResult:
    """Equal error rate, linearly interpolated at the FMR - FNMR sign change."""
    curve = det_curve(s)
    diff = curve.fmr - curve.fnmr
    j = int(np.argmax(diff >= 0))  # the +inf sentinel guarantees a hit
    if diff[j] == 0 or j == 0:
        return EerResult(float(curve.fmr[j]), float(curve.thresholds[j]))
    a = -diff[j - 1] / (diff[j] - diff[j - 1])
    rate = curve.fmr[j - 1] + a * (curve.fmr[j] - curve.fmr[j - 1])
    t0, t1 = curve.thresholds[j - 1], curve.thresholds[j]
    if np.isinf(t0):
        threshold = t1
    elif np.isinf(t1):
        threshold = t0
    else:
        threshold = t0 + a * (t1 - t0)
    return EerResult(float(rate), float(threshold))


# -- score collection -----------------------------------------------------

def tuple_matrix(ds: MultiDataset, modality, counts: Sequence[int]) -> tuple:
    """Stack each subject's first ``counts[s]`` templates of one modality.

    Returns the ``(sum(counts), d)`` value matrix and the per-subject row offsets.
    """
    rows = []
    for s, n in zip(ds.subjects, counts):
        rows.extend(t.payload.values for t in s.templates[modality][:n])
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    return np.asarray(rows), offsets


def pair_rows(pairs: ComparisonSet):
    """Row indices (into a tuple matrix) of each comparison side."""
    offsets = np.concatenate([[0], np.cumsum(pairs.tuple_counts)[:-1]]).astype(np.int64)
    m, n = pairs.mated, pairs.non_mated
    mated = (offsets[m[:, 0]] + m[:, 1], offsets[m[:, 0]] + m[:, 2])
    non = (offsets[n[:, 0]], offsets[n[:, 1]])
    return mated, non


def _chunked_sed(x: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 8192) -> np.ndarray:
    out = np.empty(a.size, dtype=np.int64 if x.dtype.kind in "iu" else np.float64)
    for lo in range(0, a.size, chunk):
        out[lo:lo + chunk] = sed_rows(x[a[lo:lo + chunk]], x[b[lo:lo + chunk]])
    return out


def _plan_modalities(ds, plan, modality):
    if plan.fusion is not None:
        return tuple(Modality.parse(m) for m in plan.fusion.order)
    if modality is None:
        if len(ds.modalities) != 1:
            raise ValueError("plan has no fusion; pass the modality to compare")
        return (ds.modalities[0],)
    return (Modality.parse(modality),)


def collect_scores(ds: MultiDataset, plan: ReductionPlan, pairs: ComparisonSet,
                   backend: str = "plaintext", modality=None, keypair=None,
                   seed: Optional[int] = None, workers: int = 1) -> ScoreSet:
    """Score every comparison in ``pairs`` after applying ``plan``.

    With a fusion plan, each modality is reduced and the results are
    concatenated in the plan's modality order. The ``"encrypted"`` backend
    enrolls the full quantized (fused) templates under Paillier, compares
    the plan's index selection under encryption and decrypts the scores
    with ``keypair``'s secret key; it needs an integer-kind plan.
    ``workers > 1`` spreads encrypted comparisons over processes.
    """
    if len(pairs.mated) == 0 and len(pairs.non_mated) == 0:
        raise ValueError("empty comparison set")
    if backend not in ("plaintext", "encrypted"):
        raise ValueError(f"unknown backend {backend!r}")
    mods = _plan_modalities(ds, plan, modality)
    mats = [tuple_matrix(ds, m, pairs.tuple_counts)[0] for m in mods]
    for x in mats:
        plan.validate(x.shape[1])
    (ma, mb), (na, nb) = pair_rows(pairs)
    if backend == "plaintext":
        reduced = np.concatenate([plan.transform(x) for x in mats], axis=1)
        return ScoreSet(_chunked_sed(reduced, ma, mb), _chunked_sed(reduced, na, nb))
    if not plan.integer_kind:
        raise ValueError("the encrypted backend needs a quantized or binary plan")
    return _encrypted_scores(plan, mats, (ma, mb), (na, nb), keypair, seed, workers)


def _encrypted_gallery(plan, mats):
    """Integer gallery matrix, compared index selection (or None) and value bound q."""
    quantized = [plan.quantization.apply(x) for x in mats]
    if isinstance(plan.truncation, SumFractions):
        # additions are applied to the protected references ahead of time
        gallery = np.concatenate([sum_fractions(x, plan.truncation.k) for x in quantized], axis=1)
        return gallery, None, _next_pow2(int(gallery.max()) + 1)
    gallery = np.concatenate(quantized, axis=1)
    offsets = np.cumsum([0] + [x.shape[1] for x in quantized[:-1]])
    selection = np.concatenate(
        [plan.selection(x.shape[1]) + off for x, off in zip(quantized, offsets)]
    )
    q = 2 if isinstance(plan.quantization, Binarize) else plan.quantization.q
    if selection.size == gallery.shape[1]:
        selection = None
    return gallery, selection, q


def _encrypted_chunk(keypair, gallery, selection, q, pairs, seed):
    import random

    from .he import decrypt, encrypted_sed, enroll_encrypted

    pk = keypair.public
    rng = random.Random(seed) if seed is not None else None
    with_squares = selection is not None and q > 2
    enrolled = {}
    out = []
    for a, b in pairs:
        if b not in enrolled:
            enrolled[b] = enroll_encrypted(pk, gallery[b], q=q, with_squares=with_squares, rng=rng)
        ct = encrypted_sed(pk, gallery[a], enrolled[b], selection=selection)
        out.append(decrypt(keypair.secret, ct))
    return out


def _encrypted_scores(plan, mats, mated, non, keypair, seed, workers=1):
    from .he import keygen

    if keypair is None:
        keypair = keygen(512, seed=seed if seed is not None else 0)
    gallery, selection, q = _encrypted_gallery(plan, mats)
    pairs = [(int(a), int(b)) for a, b in zip(*mated)] + [(int(a), int(b)) for a, b in zip(*non)]
    if workers <= 1:
        scores = _encrypted_chunk(keypair, gallery, selection, q, pairs, seed)
    else:
        from concurrent.futures import ProcessPoolExecutor

        # group by enrolled reference so each template is encrypted once
        buckets = [[] for _ in range(workers)]
        for pos, (a, b) in enumerate(pairs):
            buckets[b % workers].append((pos, a, b))
        scores = [0] * len(pairs)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (bucket, pool.submit(_encrypted_chunk, keypair, gallery, selection, q,
                                     [(a, b) for _, a, b in bucket],
                                     None if seed is None else seed + w))
                for w, bucket in enumerate(buckets) if bucket
            ]
            for bucket, fut in futures:
                for (pos, _, _), value in zip(bucket, fut.result()):
                    scores[pos] = value
    n_mated = len(mated[0])
    return ScoreSet(np.array(scores[:n_mated], dtype=np.int64),
                    np.array(scores[n_mated:], dtype=np.int64))


# -- experiment runner ----------------------------------------------------

STRATEGIES = ("fractions", "interleave", "sum")


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: dataset, strategy, quantization kinds and dimension grid.

    ``interpretation="per_modality"`` reduces every modality to the row
    dimension and fuses them (fused length = modalities x dim).
    ``"total"`` treats the row dimension as the fused length and splits it
    across modalities as evenly as possible (512 -> 171/171/170).
    """

    config: SynthConfig = field(default_factory=SynthConfig)
    strategy: str = "fractions"
    quantizations: tuple = (None,)
    grid: tuple = DEFAULT_GRID
    interpretation: str = "per_modality"
    backend: str = "plaintext"
    keypair: object = field(default=None, repr=False, compare=False)
    workers: int = 1

    def __post_init__(self):
        if self.backend not in ("plaintext", "encrypted"):
            raise ValueError("backend must be 'plaintext' or 'encrypted'")
        if self.backend == "encrypted":
            if self.interpretation != "per_modality":
                raise ValueError("the encrypted backend runs the per-modality interpretation only")
            if any(qz is None for qz in self.quantizations):
                raise ValueError("the encrypted backend needs quantized or binary plans")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.interpretation not in ("per_modality", "total"):
            raise ValueError("interpretation must be 'per_modality' or 'total'")
        grid = tuple(int(g) for g in self.grid)
        if not grid or min(grid) < 1:
            raise ValueError("grid must hold positive dimensions")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "quantizations", tuple(self.quantizations))


def quantization_label(qz) -> str:
    if qz is None:
        return "float"
    if isinstance(qz, Binarize):
        return "binary"
    return f"q{qz.q}"


@dataclass
class ReportTable:
    """Rows of (dimension, mean EER, std EER) per column; EERs are fractions."""

    title: str
    columns: tuple
    rows: list = field(default_factory=list)
    partial: bool = False

    @property
    def has_std(self) -> bool:
        return any(std is not None for row in self.rows for _, std in row["cells"].values())

    def cell(self, dim: int, column: str):
        for row in self.rows:
            if row["dim"] == dim:
                return row["cells"][column]
        raise KeyError(dim)

    def mean(self, dim: int, column: str) -> float:
        return self.cell(dim, column)[0]

    def to_text(self) -> str:
        lines = [self.title, "Dimension | " + " | ".join(self.columns)]
        for row in self.rows:
            cells = []
            for c in self.columns:
                mean, std = row["cells"].get(c, (math.nan, None))
                txt = f"{100 * mean:.2f}"
                if std is not None:
                    txt += f" ± {100 * std:.2f}"
                cells.append(txt)
            lines.append(f"{row['dim']} | " + " | ".join(cells))
        return "\n".join(lines)


class ExperimentError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def _split_total(total: int, parts: int) -> list:
    return [total // parts + (1 if i < total % parts else 0) for i in range(parts)]


def _selections(strategy, d, length):
    """Index sets (one per run) that reduce a ``d``-vector to ``length``."""
    if length >= d:
        return [np.arange(d)]
    if strategy == "fractions":
        runs = d // length
        return [np.arange(i * length, (i + 1) * length) for i in range(runs)]
    if strategy == "interleave":
        return [spaced_indices(d, length)]
    raise AssertionError(strategy)


def _reduce_runs(strategy, x, length):
    """Reduced matrices, one per fraction index (or a single run)."""
    d = x.shape[1]
    if length >= d:
        return [x]
    if strategy == "sum":
        if d % length:
            raise ValueError(f"sum strategy needs {length} to divide {d}")
        return [sum_fractions(x, d // length)]
    return [x[:, idx] for idx in _selections(strategy, d, length)]


def run_experiment(spec: ExperimentSpec, dataset: Optional[MultiDataset] = None) -> dict:
    """Build one :class:`ReportTable` per quantization kind in ``spec``.

    Fraction rows average the EER over every fraction index (the fused
    column uses the same index in every modality) and report its standard
    deviation; interleave and sum rows are single runs.
    """
    ds = generate(spec.config) if dataset is None else dataset
    if spec.backend == "encrypted" and spec.keypair is None:
        from dataclasses import replace

        from .he import keygen

        spec = replace(spec, keypair=keygen(512, seed=spec.config.seed))
    pairs = enumerate_comparisons(ds)
    (ma, mb), (na, nb) = pair_rows(pairs)
    mods = ds.modalities
    raw = {m: tuple_matrix(ds, m, pairs.tuple_counts)[0] for m in mods}
    columns = (ALL,) + tuple(modality_name(m) for m in mods)
    tables = {}
    for qz in spec.quantizations:
        label = quantization_label(qz)
        table = ReportTable(f"{spec.strategy} ({label}), {spec.interpretation}", columns)
        tables[label] = table
        base = {m: (raw[m] if qz is None else qz.apply(raw[m])) for m in mods}
        try:
            for dim in spec.grid:
                if spec.backend == "encrypted":
                    table.rows.append(_run_row_encrypted(spec, ds, pairs, qz, dim))
                else:
                    table.rows.append(_run_row(spec, base, mods, dim, (ma, mb), (na, nb)))
        except Exception as exc:
            table.partial = True
            raise ExperimentError(f"{label} run failed at a grid point: {exc}", tables) from exc
        log.info("%s", table.to_text())
    return tables


def _eer_of(mated, non):
    return eer(ScoreSet(mated, non)).eer


def _run_row(spec, base, mods, dim, mated, non):
    if spec.interpretation == "per_modality":
        fused_lengths = [dim] * len(mods)
    else:
        fused_lengths = _split_total(dim, len(mods))
    # scores per modality and run index; SED over a concatenation is the
    # sum of the per-part SEDs, so fused scores are sums of these
    single_cells = {}
    fused_parts = []
    for m, length in zip(mods, fused_lengths):
        x = base[m]
        if length > x.shape[1]:
            raise ValueError(f"dimension {length} exceeds {modality_name(m)} length {x.shape[1]}")
        runs = _reduce_runs(spec.strategy, x, length)
        fused_parts.append([(_chunked_sed(r, *mated), _chunked_sed(r, *non)) for r in runs])
        if dim <= x.shape[1]:
            if length == dim:
                singles = fused_parts[-1]
            else:
                singles = [(_chunked_sed(r, *mated), _chunked_sed(r, *non))
                           for r in _reduce_runs(spec.strategy, x, dim)]
            single_cells[modality_name(m)] = _summarize([_eer_of(*s) for s in singles])
    n_runs = min(len(p) for p in fused_parts)
    fused = []
    for i in range(n_runs):
        fm = sum(p[i][0] for p in fused_parts)
        fn = sum(p[i][1] for p in fused_parts)
        fused.append(_eer_of(fm, fn))
    cells = {ALL: _summarize(fused)}
    for m in mods:
        cells[modality_name(m)] = single_cells.get(modality_name(m), (math.nan, None))
    return {"dim": dim, "fused_dim": int(sum(fused_lengths)), "runs": n_runs, "cells": cells}


def truncations_for(strategy: str, d: int, dim: int) -> list:
    """Truncation steps (one per run) reducing a ``d``-vector to ``dim``."""
    if dim >= d:
        return [None]
    if d % dim:
        raise ValueError(f"{strategy} plans need {dim} to divide {d}")
    k = d // dim
    if strategy == "fractions":
        return [Fraction(k, i) for i in range(1, k + 1)]
    if strategy == "interleave":
        return [Interleave(k)]
    return [SumFractions(k)]


def _run_row_encrypted(spec, ds, pairs, qz, dim):
    mods = ds.modalities
    d = ds.dim(mods[0])
    cells = {}
    runs = truncations_for(spec.strategy, d, dim)
    kw = dict(backend="encrypted", keypair=spec.keypair, seed=spec.config.seed, workers=spec.workers)
    fused = [
        eer(collect_scores(ds, ReductionPlan(qz, t, ConcatFusion(mods)), pairs, **kw)).eer
        for t in runs
    ]
    cells[ALL] = _summarize(fused)
    for m in mods:
        values = [eer(collect_scores(ds, ReductionPlan(qz, t), pairs, modality=m, **kw)).eer
                  for t in runs]
        cells[modality_name(m)] = _summarize(values)
    return {"dim": dim, "fused_dim": dim * len(mods), "runs": len(runs), "cells": cells}


def _summarize(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size > 1:
        return float(values.mean()), float(values.std())
    return float(values[0]), None
