import json
import subprocess
import sys

import pytest

from mbtrunc import io as fio
from mbtrunc.cli import main, parse_selection


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--subjects", "4", "--samples", "2", "--dim", "16", "--seed", "9",
                 "--out", str(out)]) == 0
    return out


def test_synth_outputs(synth_dir):
    names = sorted(p.name for p in synth_dir.iterdir())
    assert names == ["face.btrc", "fingerprint.btrc", "iris.btrc", "manifest.json"]
    manifest = fio.read_json(synth_dir / "manifest.json")
    assert manifest["config"]["seed"] == 9
    assert len(fio.read_templates(synth_dir / "iris.btrc")) == 8


def test_synth_deterministic(synth_dir, tmp_path):
    assert main(["synth", "--subjects", "4", "--samples", "2", "--dim", "16", "--seed", "9",
                 "--out", str(tmp_path)]) == 0
    for name in ("face.btrc", "fingerprint.btrc", "iris.btrc", "manifest.json"):
        assert (tmp_path / name).read_bytes() == (synth_dir / name).read_bytes()


def test_reduce_and_encrypted_match(synth_dir, tmp_path):
    plan = json.dumps({"quantization": {"kind": "levels", "q": 16, "range": [-1.0, 1.0]},
                       "truncation": None, "fusion": {"kind": "concat", "order": ["Face", "Fingerprint", "Iris"]}})
    red = tmp_path / "red"
    files = [str(synth_dir / f) for f in ("face.btrc", "fingerprint.btrc", "iris.btrc")]
    assert main(["reduce", "--plan", plan, "--out", str(red), *files]) == 0
    fused = fio.read_templates(red / "fused.reduced.btrc")
    assert len(fused) == 8 and fused[0].payload.dim == 48

    gal = tmp_path / "gal"
    assert main(["enroll", "--bits", "128", "--seed", "1", "--squares", "--out", str(gal),
                 str(red / "fused.reduced.btrc")]) == 0
    res = tmp_path / "res"
    args = ["match", "--gallery", str(gal / "gallery.btre"), "--probe-file", str(red / "fused.reduced.btrc"),
            "--pubkey", str(gal / "pubkey.json"), "--seckey", str(gal / "seckey.json"), "--out", str(res)]
    assert main(args) == 0
    rows = (res / "scores.csv").read_text().splitlines()
    assert len(rows) == 1 + 64
    for line in rows[1:]:
        ps, pi, rs, ri, score = line.split(",")
        if (ps, pi) == (rs, ri):
            assert score == "0"
    assert main(args + ["--selection", "fraction:2:1", "--parts", "3"]) == 0


def test_plan_file_and_single_modality_reduce(synth_dir, tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"quantization": {"kind": "binary", "threshold": 0.0},
                                "truncation": {"kind": "interleave", "x": 4}, "fusion": None}))
    assert main(["reduce", "--plan", str(plan), "--out", str(tmp_path), str(synth_dir / "face.btrc")]) == 0
    t = fio.read_templates(tmp_path / "face.reduced.btrc")
    assert t[0].payload.kind == "binary" and t[0].payload.dim == 4


def test_workload_cli(capsys):
    assert main(["workload", "--dim", "512"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["reduced"]["rotations"] == 9


def test_eval_cli(tmp_path):
    assert main(["eval", "--plan", "fractions-binary", "--grid", "8,16", "--subjects", "6",
                 "--samples", "2", "--dim", "16", "--out", str(tmp_path)]) == 0
    data = (tmp_path / "eval_fractions-binary_seed0.csv").read_bytes()
    assert data.startswith(b"modality,dim,mean_eer,std_eer\r\n")


def test_exit_codes(synth_dir, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--bogus"])
    assert info.value.code == 2
    assert main(["synth", "--subjects", "1", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.btrc"
    bad.write_bytes(b"")
    assert main(["reduce", "--plan", '{"quantization": null, "truncation": null, "fusion": null}',
                 "--out", str(tmp_path), str(bad)]) == 4
    assert main(["reduce", "--plan", "{}", "--out", str(tmp_path), str(tmp_path / "missing.btrc")]) in (2, 4)
    broken = tmp_path / "pk.json"
    broken.write_text('{"n": "zz"}')
    assert main(["enroll", "--pubkey", str(broken), "--out", str(tmp_path), str(synth_dir / "face.btrc")]) == 3


def test_key_mismatch_exit(tmp_path, synth_dir):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["keygen", "--bits", "64", "--seed", "1", "--out", str(a)]) == 0
    assert main(["keygen", "--bits", "64", "--seed", "2", "--out", str(b)]) == 0
    plan = '{"quantization": {"kind": "binary", "threshold": 0.0}, "truncation": null, "fusion": null}'
    assert main(["reduce", "--plan", plan, "--out", str(tmp_path), str(synth_dir / "face.btrc")]) == 0
    assert main(["enroll", "--pubkey", str(a / "pubkey.json"), "--out", str(a),
                 str(tmp_path / "face.reduced.btrc")]) == 0
    assert main(["match", "--gallery", str(a / "gallery.btre"), "--probe-file", str(tmp_path / "face.reduced.btrc"),
                 "--pubkey", str(b / "pubkey.json"), "--seckey", str(b / "seckey.json"),
                 "--out", str(tmp_path)]) == 3


def test_parse_selection():
    assert parse_selection("none", 8) is None
    assert parse_selection("fraction:2:2", 8).tolist() == [4, 5, 6, 7]
    assert parse_selection("interleave:2", 8, parts=2).tolist() == [0, 2, 4, 6]
    assert parse_selection("indices:1,3", 8).tolist() == [1, 3]
    with pytest.raises(ValueError):
        parse_selection("random:3", 8)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "mbtrunc", "workload", "--dim", "1"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["reduced"]["rotations"] == 0
