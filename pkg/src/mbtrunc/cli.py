"""Command line entry point: ``mbtrunc <command> [options]``.

Exit codes: 0 success, 2 usage or validation error, 3 key/crypto error,
4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import io as fio
from .core import Modality, modality_name
from .evaluate import DEFAULT_GRID, ExperimentSpec, run_experiment
from .he import (
    DEFAULT_BITS,
    KeyFileError,
    KeyGenError,
    KeyMismatchError,
    PublicKey,
    SecretKey,
    compare_workloads,
    decrypt,
    encrypted_sed,
    enroll_encrypted,
    keygen,
    make_rng,
    workload_estimate,
)
from .reduce import (
    Binarize,
    Levels,
    ReductionPlan,
    fraction_indices,
    fuse_concat,
    interleave_indices,
    apply_plan,
)
from .synth import CalibrationError, SynthConfig, calibrate, generate

log = logging.getLogger("mbtrunc")

EXIT_OK, EXIT_USAGE, EXIT_CRYPTO, EXIT_IO = 0, 2, 3, 4


def _threads(value: str) -> int:
    if value == "auto":
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1 or 'auto'")
    return n


def _u64(value: str) -> int:
    n = int(value, 0)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return n


def _int_list(value: str) -> tuple:
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def _per_modality_floats(value: str):
    """``0.03`` or ``Face=0.03,Fingerprint=0.036,Iris=0.034``."""
    if "=" not in value:
        return float(value)
    out = {}
    for item in value.split(","):
        key, _, num = item.partition("=")
        out[modality_name(Modality.parse(key.strip()))] = float(num)
    return out


# -- commands -------------------------------------------------------------

def _file_entry(path: Path, templates) -> dict:
    return {
        "path": path.name,
        "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        "count": len(templates),
        "dim": templates[0].dim if templates else 0,
    }


def cmd_synth(args) -> int:
    base = SynthConfig(
        subjects=args.subjects,
        samples_per_modality=args.samples,
        dim=args.dim,
        seed=0 if args.seed is None else args.seed,
        **({"sigma": args.sigma} if args.sigma is not None else {}),
        **({"degradation": args.degradation} if args.degradation is not None else {}),
        nuisance_rank=args.nuisance_rank,
        nuisance_share=args.nuisance_share,
    )
    calibration = None
    if args.calibrate:
        lo, hi = (float(v) for v in args.calibrate.split(","))
        sigma = calibrate((lo, hi), base)
        calibration = {"target": [lo, hi], "sigma": sigma}
        base = base.replace(sigma=sigma)
    ds = generate(base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for m in ds.modalities:
        path = out / f"{modality_name(m).lower()}.btrc"
        temps = ds.templates(m)
        fio.write_templates(path, temps, modality=m)
        files[modality_name(m)] = _file_entry(path, temps)
    manifest = {"config": base.to_dict(), "calibration": calibration, "files": files}
    fio.write_json(out / "manifest.json", manifest)
    _emit(args, manifest)
    return EXIT_OK


def _load_plan(text: str) -> ReductionPlan:
    path = Path(text)
    if path.suffix == ".json" or path.exists():
        return ReductionPlan.from_dict(fio.read_json(path))
    return ReductionPlan.from_json(text)


def cmd_reduce(args) -> int:
    plan = _load_plan(args.plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [(Path(p), fio.read_templates(p)) for p in args.inputs]
    outputs = {}
    if plan.fusion is None:
        for path, temps in inputs:
            reduced = [apply_plan(t, plan) for t in temps]
            target = out / f"{path.stem}.reduced.btrc"
            fio.write_templates(target, reduced)
            outputs[path.name] = _file_entry(target, reduced)
    else:
        by_mod = {}
        for _, temps in inputs:
            for t in temps:
                by_mod.setdefault(Modality.parse(modality_name(t.modality)), defaultdict(list))
                by_mod[Modality.parse(modality_name(t.modality))][t.subject_id].append(t)
        missing = [modality_name(m) for m in plan.fusion.order if m not in by_mod]
        if missing:
            raise ValueError(f"fusion plan needs inputs for {missing}")
        subjects = sorted(set.intersection(*(set(by_mod[m]) for m in plan.fusion.order)))
        fused = []
        for sid in subjects:
            per_mod = [sorted(by_mod[m][sid], key=lambda t: t.sample_index) for m in plan.fusion.order]
            for j in range(min(len(p) for p in per_mod)):
                parts = {m: apply_plan(p[j], plan) for m, p in zip(plan.fusion.order, per_mod)}
                t = fuse_concat(parts, plan.fusion.order)
                fused.append(type(t)(t.payload, sid, j, plan))
        target = out / "fused.reduced.btrc"
        fio.write_templates(target, fused)
        outputs["fused"] = _file_entry(target, fused)
    doc = {"plan": plan.to_dict(), "outputs": outputs}
    fio.write_json(out / "reduce.json", doc)
    _emit(args, doc)
    return EXIT_OK


def cmd_keygen(args) -> int:
    if args.seed is not None:
        log.warning("deterministic key generation (seeded); for tests only")
    kp = keygen(args.bits, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fio.write_json(out / "pubkey.json", kp.public.to_dict())
    fio.write_json(out / "seckey.json", kp.secret.to_dict())
    _emit(args, {"fingerprint": kp.public.fingerprint, "bits": kp.bits})
    return EXIT_OK


def _read_public(path) -> PublicKey:
    return PublicKey.from_dict(fio.read_json(path))


def cmd_enroll(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.pubkey:
        pk = _read_public(args.pubkey)
    else:
        kp = keygen(args.bits, seed=args.seed)
        pk = kp.public
        fio.write_json(out / "pubkey.json", pk.to_dict())
        fio.write_json(out / "seckey.json", kp.secret.to_dict())
    rng = make_rng(args.seed)
    records = []
    for path in args.inputs:
        for t in fio.read_templates(path):
            enc = enroll_encrypted(pk, t.payload, with_squares=args.squares, rng=rng)
            records.append((t.subject_id, t.sample_index, enc))
    target = out / "gallery.btre"
    fio.write_gallery(target, records, pk)
    _emit(args, {"gallery": target.name, "records": len(records), "fingerprint": pk.fingerprint})
    return EXIT_OK


def parse_selection(text: str, dim: int, parts: int = 1):
    """Index subset from ``none``, ``fraction:K:I``, ``interleave:X`` or ``indices:a,b,...``.

    With ``parts > 1`` the template is split into that many equal blocks
    (one per fused modality) and the rule is applied inside each block.
    """
    if text in (None, "", "none"):
        return None
    if dim % parts:
        raise ValueError(f"dimension {dim} does not split into {parts} parts")
    block = dim // parts
    kind, _, rest = text.partition(":")
    if kind == "indices":
        return np.array([int(v) for v in rest.split(",")], dtype=np.int64)
    if kind == "fraction":
        k, i = (int(v) for v in rest.split(":"))
        local = fraction_indices(block, k, i)
    elif kind == "interleave":
        local = interleave_indices(block, int(rest))
    else:
        raise ValueError(f"unknown selection {text!r}")
    return np.concatenate([local + p * block for p in range(parts)])


def cmd_match(args) -> int:
    pk = _read_public(args.pubkey)
    sk = SecretKey.from_dict(fio.read_json(args.seckey))
    if sk.public.fingerprint != pk.fingerprint:
        raise KeyMismatchError("secret key does not belong to the public key")
    gallery = fio.read_gallery(args.gallery, pk)
    probes = fio.read_templates(args.probe_file)
    rows = [["probe_subject", "probe_sample", "ref_subject", "ref_sample", "score"]]
    for p in probes:
        for sid, index, enc in gallery:
            sel = parse_selection(args.selection, enc.dim, args.parts)
            ct = encrypted_sed(pk, p.payload, enc, selection=sel)
            rows.append([p.subject_id, str(p.sample_index), sid, str(index), str(decrypt(sk, ct))])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        doc = [dict(zip(rows[0], r)) for r in rows[1:]]
        fio.write_json(out / "scores.json", doc)
    else:
        fio.write_csv(rows, out / "scores.csv")
    print(fio.to_csv(rows), end="")
    return EXIT_OK


NAMED_QUANT = {"float": None, "binary": Binarize(0.0)}


def _named_plan(name: str):
    strategy, _, quant = name.partition("-")
    quant = quant or "float"
    if quant in NAMED_QUANT:
        qz = NAMED_QUANT[quant]
    elif quant.startswith("q") and quant[1:].isdigit():
        qz = Levels(int(quant[1:]))
    else:
        raise ValueError(f"unknown quantization {quant!r} in plan name {name!r}")
    return strategy, qz


def cmd_eval(args) -> int:
    strategy, qz = _named_plan(args.plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    docs = {}
    for seed in args.seeds:
        config = SynthConfig(subjects=args.subjects, samples_per_modality=args.samples,
                             dim=args.dim, seed=seed)
        spec = ExperimentSpec(
            config=config,
            strategy=strategy,
            quantizations=(qz,),
            grid=args.grid,
            interpretation="total" if args.total_dim else "per_modality",
            backend=args.backend,
            workers=args.threads,
        )
        for label, table in run_experiment(spec).items():
            stem = f"eval_{strategy}-{label}_seed{seed}"
            if args.format == "json":
                fio.write_json(out / f"{stem}.json", _table_doc(table))
            else:
                fio.write_csv(table, out / f"{stem}.csv")
            docs[stem] = table
            print(table.to_text())
    return EXIT_OK


def _table_doc(table) -> dict:
    return {
        "title": table.title,
        "columns": list(table.columns),
        "partial": table.partial,
        "rows": [
            {"dim": r["dim"], "fused_dim": r["fused_dim"], "runs": r["runs"],
             **{c: {"mean_eer": m, "std_eer": s} for c, (m, s) in r["cells"].items()}}
            for r in table.rows
        ],
    }


def cmd_workload(args) -> int:
    report = workload_estimate(args.dim, args.kind, args.slots)
    baseline = workload_estimate(args.baseline_dim, args.baseline_kind, args.slots)
    doc = compare_workloads(report, baseline)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.format == "csv":
            rows = [list(report.to_dict()), [str(v) for v in report.to_dict().values()]]
            fio.write_csv(rows, out / "workload.csv")
        else:
            fio.write_json(out / "workload.json", doc)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _emit(args, doc):
    print(json.dumps(doc, indent=2, sort_keys=True))


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=None,
                        help="64-bit seed; makes key generation and encryption deterministic")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=_threads, default=1, help="worker count or 'auto'")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mbtrunc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic multi-biometric dataset")
    p.add_argument("--subjects", type=int, default=200)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--sigma", type=_per_modality_floats, default=None)
    p.add_argument("--degradation", type=_per_modality_floats, default=None)
    p.add_argument("--nuisance-rank", type=int, default=SynthConfig.nuisance_rank)
    p.add_argument("--nuisance-share", type=float, default=SynthConfig.nuisance_share)
    p.add_argument("--calibrate", metavar="LO,HI", help="calibrate sigma to a single-modality EER range")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reduce", parents=[common], help="apply a reduction plan to template files")
    p.add_argument("--plan", required=True, help="plan JSON file or inline JSON")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("keygen", parents=[common], help="generate a Paillier key pair")
    p.add_argument("--bits", type=int, default=DEFAULT_BITS)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("enroll", parents=[common], help="encrypt template files into a gallery")
    p.add_argument("--pubkey", help="public key JSON; a new key pair is made when omitted")
    p.add_argument("--bits", type=int, default=DEFAULT_BITS)
    p.add_argument("--squares", action="store_true",
                   help="store encrypted squared elements for truncated matching")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("match", parents=[common], help="compare probes against an encrypted gallery")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probe-file", required=True)
    p.add_argument("--pubkey", required=True)
    p.add_argument("--seckey", required=True, help="secret key JSON of the key holder")
    p.add_argument("--selection", default="none",
                   help="none | fraction:K:I | interleave:X | indices:a,b,...")
    p.add_argument("--parts", type=int, default=1,
                   help="apply the selection inside each of this many equal blocks")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", parents=[common], help="run the dimension-grid experiment")
    p.add_argument("--plan", default="fractions-float",
                   help="STRATEGY-QUANT, e.g. fractions-binary, interleave-float, sum-q16")
    p.add_argument("--grid", type=_int_list, default=DEFAULT_GRID)
    p.add_argument("--seeds", type=_int_list, default=(0,))
    p.add_argument("--backend", choices=("plaintext", "encrypted"), default="plaintext")
    p.add_argument("--total-dim", action="store_true",
                   help="grid values are fused lengths split across modalities")
    p.add_argument("--subjects", type=int, default=200)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--dim", type=int, default=512)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("workload", parents=[common], help="packed-HE operation counts")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--slots", type=int, default=4096)
    p.add_argument("--kind", choices=("float_packed", "int_packed", "binary_packed"),
                   default="binary_packed")
    p.add_argument("--baseline-dim", type=int, default=1536)
    p.add_argument("--baseline-kind", choices=("float_packed", "int_packed", "binary_packed"),
                   default="float_packed")
    p.set_defaults(func=cmd_workload, out=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    resolved = {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in vars(args).items() if k != "func"}
    log.info("config %s", json.dumps(resolved, default=str, sort_keys=True))
    try:
        return args.func(args)
    except (KeyMismatchError, KeyGenError, KeyFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CRYPTO
    except (fio.FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
