"""Binary template/gallery files, JSON documents and CSV reports.

Template file (little-endian fixed-width fields)::

    b"BTRC" | version u16 | kind u8 (0=f64, 1=uint level, 2=bit) | q u16
    | dim u32 | count u32 | modality tag (u16 length + UTF-8)
    then per record: subject id (u16 length + UTF-8) | sample index u32 | payload

Payloads are ``dim`` f64 values, ``dim`` bytes of levels, or ``ceil(dim/8)``
bytes of MSB-first packed bits with zero padding.

Encrypted gallery file::

    b"BTRE" | version u16 | dim u32 | q u16 | flags u8 (bit 0: squares stored)
    | key fingerprint (u16 length + ASCII) | count u32
    then per record: subject id | sample index u32 | ciphertexts

where each ciphertext is a u32 byte length followed by the big-endian
integer; a record holds ``dim`` element ciphertexts, the squared-norm
ciphertext and, with the flag set, ``dim`` squared-element ciphertexts.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import BinaryVector, FeatureVector, Modality, QuantizedVector, Template, modality_name

TEMPLATE_MAGIC = b"BTRC"
GALLERY_MAGIC = b"BTRE"
FORMAT_VERSION = 1
KIND_CODES = {"float": 0, "quantized": 1, "binary": 2}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


class FormatError(ValueError):
    code = "format"


class NotATemplateFile(FormatError):
    code = "bad_magic"


class VersionMismatch(FormatError):
    code = "version"


class TruncatedFile(FormatError):
    code = "truncated"


class CountMismatch(FormatError):
    code = "count"


# -- atomic writes --------------------------------------------------------

def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for the file format")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"file ends after {len(self.data)} bytes; needed {self.pos + n}")
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


# -- template files -------------------------------------------------------

def _payload_bytes(v) -> bytes:
    if isinstance(v, FeatureVector):
        return v.elements.astype("<f8").tobytes()
    if isinstance(v, BinaryVector):
        return np.packbits(v.bits).tobytes()
    if v.q > 256:
        raise ValueError("levels above 255 do not fit the one-byte payload")
    return v.levels.astype(np.uint8).tobytes()


def encode_templates(templates, modality=None) -> bytes:
    templates = list(templates)
    if templates:
        first = templates[0].payload
        kind, dim, q = first.kind, first.dim, getattr(first, "q", 0) if first.kind != "float" else 0
        tag = modality_name(first.modality) if modality is None and first.modality else modality
        for t in templates:
            p = t.payload
            if p.kind != kind or p.dim != dim or (kind == "quantized" and p.q != q):
                raise ValueError("a template file must hold one numeric kind and dimension")
    else:
        kind, dim, q, tag = "float", 0, 0, modality
    tag = "" if tag is None else modality_name(tag)
    out = [TEMPLATE_MAGIC, struct.pack("<HBHII", FORMAT_VERSION, KIND_CODES[kind], q, dim, len(templates)),
           _pack_str(tag)]
    for t in templates:
        out.append(_pack_str(t.subject_id))
        out.append(struct.pack("<I", t.sample_index))
        out.append(_payload_bytes(t.payload))
    return b"".join(out)


def decode_templates(data: bytes) -> list:
    r = _Reader(data)
    if len(data) < 4 or r.take(4) != TEMPLATE_MAGIC:
        raise NotATemplateFile("not a template file")
    version, code, q, dim, count = r.unpack("<HBHII")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported template file version {version}")
    if code not in KIND_NAMES:
        raise FormatError(f"unknown element kind code {code}")
    kind = KIND_NAMES[code]
    tag = r.string()
    modality = Modality.parse(tag) if tag else None
    size = {"float": 8 * dim, "quantized": dim, "binary": (dim + 7) // 8}[kind]
    templates = []
    for _ in range(count):
        sid = r.string()
        (index,) = r.unpack("<I")
        raw = r.take(size)
        if kind == "float":
            payload = FeatureVector(np.frombuffer(raw, dtype="<f8").astype(np.float64), modality=modality)
        elif kind == "quantized":
            payload = QuantizedVector(np.frombuffer(raw, dtype=np.uint8), q=q, modality=modality)
        else:
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:dim]
            payload = BinaryVector(bits, modality=modality)
        templates.append(Template(payload, sid, index))
    if r.remaining:
        raise CountMismatch(f"{r.remaining} trailing bytes after {count} declared records")
    return templates


def write_templates(path, templates, modality=None):
    atomic_write_bytes(path, encode_templates(templates, modality))


def read_templates(path) -> list:
    return decode_templates(Path(path).read_bytes())


# -- encrypted galleries --------------------------------------------------

def _pack_int(v) -> bytes:
    v = int(v)
    raw = v.to_bytes(max(1, (v.bit_length() + 7) // 8), "big")
    return struct.pack("<I", len(raw)) + raw


def _unpack_int(r: _Reader) -> int:
    (n,) = r.unpack("<I")
    return int.from_bytes(r.take(n), "big")


def encode_gallery(records, public_key=None) -> bytes:
    """``records`` is a list of ``(subject_id, sample_index, EncryptedTemplate)``."""
    records = list(records)
    if records:
        first = records[0][2]
        dim, q, fp, squares = first.dim, first.q, first.fingerprint, first.squares is not None
    else:
        dim, q, squares = 0, 0, False
        fp = public_key.fingerprint if public_key is not None else ""
    out = [GALLERY_MAGIC, struct.pack("<HIHB", FORMAT_VERSION, dim, q, int(squares)), _pack_str(fp),
           struct.pack("<I", len(records))]
    for sid, index, enc in records:
        if (enc.dim, enc.q, enc.fingerprint, enc.squares is not None) != (dim, q, fp, squares):
            raise ValueError("gallery records must share dim, q, key and layout")
        out.append(_pack_str(sid))
        out.append(struct.pack("<I", index))
        out.extend(_pack_int(c) for c in enc.elementwise)
        out.append(_pack_int(enc.norm_sq))
        if squares:
            out.extend(_pack_int(c) for c in enc.squares)
    return b"".join(out)


def decode_gallery(data: bytes, public_key=None) -> list:
    from .he.paillier import KeyMismatchError
    from .he.protocol import EncryptedTemplate

    r = _Reader(data)
    if len(data) < 4 or r.take(4) != GALLERY_MAGIC:
        raise NotATemplateFile("not an encrypted gallery file")
    version, dim, q, flags = r.unpack("<HIHB")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported gallery file version {version}")
    fp = r.string()
    if public_key is not None and public_key.fingerprint != fp:
        raise KeyMismatchError(f"gallery key {fp} does not match supplied key {public_key.fingerprint}")
    (count,) = r.unpack("<I")
    bound = public_key.n_sq if public_key is not None else None
    records = []
    for _ in range(count):
        sid = r.string()
        (index,) = r.unpack("<I")
        cts = [_unpack_int(r) for _ in range(dim + 1 + (dim if flags & 1 else 0))]
        if bound is not None and any(not 0 < c < bound for c in cts):
            raise FormatError("ciphertext outside (0, n^2)")
        squares = tuple(cts[dim + 1:]) if flags & 1 else None
        records.append((sid, index, EncryptedTemplate(tuple(cts[:dim]), cts[dim], dim, q, fp, squares)))
    if r.remaining:
        raise CountMismatch(f"{r.remaining} trailing bytes after {count} declared records")
    return records


def write_gallery(path, records, public_key=None):
    atomic_write_bytes(path, encode_gallery(records, public_key))


def read_gallery(path, public_key=None) -> list:
    return decode_gallery(Path(path).read_bytes(), public_key)


# -- JSON -----------------------------------------------------------------

def write_json(path, doc):
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


# -- CSV ------------------------------------------------------------------

def fmt_rate(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def fmt_threshold(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def csv_rows(obj):
    """Header plus rows for a DetCurve, EerResult, ReportTable or ScoreSet."""
    from .evaluate import DetCurve, EerResult, ReportTable, ScoreSet

    if isinstance(obj, DetCurve):
        yield ["threshold", "fmr", "fnmr"]
        for t, a, b in obj.points:
            yield [fmt_threshold(t), fmt_rate(a), fmt_rate(b)]
    elif isinstance(obj, EerResult):
        yield ["eer", "threshold"]
        yield [fmt_rate(obj.eer), fmt_threshold(obj.threshold_at_eer)]
    elif isinstance(obj, ReportTable):
        with_std = obj.has_std
        yield ["modality", "dim", "mean_eer", "std_eer"] if with_std else ["modality", "dim", "mean_eer"]
        for column in obj.columns:
            for row in obj.rows:
                mean, std = row["cells"][column]
                line = [column, str(row["dim"]), fmt_rate(mean)]
                if with_std:
                    line.append("" if std is None else fmt_rate(std))
                yield line
    elif isinstance(obj, ScoreSet):
        yield ["label", "score"]
        for label, values in (("mated", obj.mated_scores), ("non_mated", obj.non_mated_scores)):
            for v in values:
                yield [label, str(int(v)) if np.asarray(values).dtype.kind in "iu" else repr(float(v))]
    else:
        rows = list(obj)
        yield from rows


def to_csv(obj) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerows(csv_rows(obj))
    return buf.getvalue()


def write_csv(obj, path):
    """Write ``obj`` as RFC 4180 CSV (CRLF line ends, header row)."""
    atomic_write_text(path, to_csv(obj))
