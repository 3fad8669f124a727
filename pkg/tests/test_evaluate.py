import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbtrunc.evaluate import (
    ExperimentSpec,
    ReportTable,
    ScoreSet,
    collect_scores,
    det_curve,
    eer,
    run_experiment,
)
from mbtrunc.reduce import Binarize, ConcatFusion, Fraction, Interleave, Levels, ReductionPlan, SumFractions
from mbtrunc.synth import SynthConfig, enumerate_comparisons, generate

from oracles import eer_scan


def test_worked_example():
    s = ScoreSet([1, 2, 3, 7], [3, 5, 6, 8])
    curve = det_curve(s)
    assert curve.points[0] == (-np.inf, 0.0, 1.0)
    assert curve.points[-1] == (np.inf, 1.0, 0.0)
    r = eer(s)
    assert r.eer == pytest.approx(0.25)
    assert r.threshold_at_eer == pytest.approx(3)


def test_separable_and_identical():
    assert eer(ScoreSet([0, 1, 2], [5, 6, 7])).eer == 0.0
    same = np.arange(10)
    assert eer(ScoreSet(same, same)).eer == pytest.approx(0.5, abs=0.1)
    assert eer(ScoreSet([1.0] * 4, [1.0] * 4)).eer == pytest.approx(0.5)


def test_empty_rejected():
    with pytest.raises(ValueError):
        eer(ScoreSet([], [1.0]))
    with pytest.raises(ValueError):
        det_curve(ScoreSet([1.0], []))


def test_det_monotone(rng):
    curve = det_curve(ScoreSet(rng.normal(1, 1, 200), rng.normal(3, 1, 300)))
    assert np.all(np.diff(curve.fmr) >= 0) and np.all(np.diff(curve.fnmr) <= 0)
    assert len(curve) == 502


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(0, 30), min_size=1, max_size=25),
    st.lists(st.integers(0, 30), min_size=1, max_size=25),
)
def test_eer_matches_oracle(mated, non):
    assert eer(ScoreSet(mated, non)).eer == pytest.approx(eer_scan(mated, non), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-100, 100), min_size=2, max_size=30), st.integers(-50, 50))
def test_eer_shift_invariant(values, shift):
    mated, non = values[: len(values) // 2], values[len(values) // 2:]
    a = eer(ScoreSet(mated, non)).eer
    b = eer(ScoreSet(np.add(mated, shift), np.add(non, shift))).eer
    assert 0 <= a <= 1
    assert a == pytest.approx(b, abs=1e-9)


@pytest.fixture(scope="module")
def tiny():
    ds = generate(SynthConfig(subjects=5, samples_per_modality=2, dim=16, seed=4))
    return ds, enumerate_comparisons(ds)


@pytest.mark.parametrize("plan", [
    ReductionPlan(Levels(16), Fraction(2, 2), ConcatFusion()),
    ReductionPlan(Binarize(0.0), Interleave(4), ConcatFusion()),
    ReductionPlan(Levels(4), SumFractions(2), ConcatFusion()),
    ReductionPlan(Levels(8), None, ConcatFusion()),
])
def test_encrypted_backend_matches_plaintext(tiny, small_keys, plan):
    ds, pairs = tiny
    plain = collect_scores(ds, plan, pairs)
    enc = collect_scores(ds, plan, pairs, backend="encrypted", keypair=small_keys, seed=1)
    assert np.array_equal(plain.mated_scores, enc.mated_scores)
    assert np.array_equal(plain.non_mated_scores, enc.non_mated_scores)


def test_encrypted_backend_needs_integers(tiny, small_keys):
    ds, pairs = tiny
    with pytest.raises(ValueError):
        collect_scores(ds, ReductionPlan(None, Fraction(2, 1), ConcatFusion()), pairs,
                       backend="encrypted", keypair=small_keys)


def test_single_modality_plan_needs_modality(tiny):
    ds, pairs = tiny
    with pytest.raises(ValueError):
        collect_scores(ds, ReductionPlan(None, Fraction(2, 1)), pairs)
    s = collect_scores(ds, ReductionPlan(None, Fraction(2, 1)), pairs, modality="Iris")
    assert len(s.mated_scores) == 5 and len(s.non_mated_scores) == 10


def test_run_experiment_structure():
    cfg = SynthConfig(subjects=12, samples_per_modality=2, dim=64, seed=2)
    tables = run_experiment(ExperimentSpec(cfg, "fractions", (None, Binarize(0.0)), grid=(16, 32, 64)))
    assert set(tables) == {"float", "binary"}
    t = tables["float"]
    assert isinstance(t, ReportTable)
    assert t.columns == ("All", "Face", "Fingerprint", "Iris")
    assert [r["runs"] for r in t.rows] == [4, 2, 1]
    assert t.cell(16, "Face")[1] is not None
    assert t.cell(64, "Face")[1] is None
    assert "Dimension" in t.to_text()

    inter = run_experiment(ExperimentSpec(cfg, "interleave", grid=(16, 32)))["float"]
    assert not inter.has_std


def test_run_experiment_total_interpretation():
    cfg = SynthConfig(subjects=12, samples_per_modality=2, dim=64, seed=2)
    t = run_experiment(ExperimentSpec(cfg, "fractions", grid=(48, 64), interpretation="total"))["float"]
    assert [r["fused_dim"] for r in t.rows] == [48, 64]


def test_fused_column_equals_fused_plan():
    cfg = SynthConfig(subjects=10, samples_per_modality=2, dim=32, seed=5)
    ds = generate(cfg)
    pairs = enumerate_comparisons(ds)
    t = run_experiment(ExperimentSpec(cfg, "interleave", (Levels(16),), grid=(8,)), ds)["q16"]
    direct = eer(collect_scores(ds, ReductionPlan(Levels(16), Interleave(4), ConcatFusion()), pairs)).eer
    assert t.mean(8, "All") == pytest.approx(direct, abs=1e-12)


def test_encrypted_run_experiment_matches_plaintext(small_keys):
    cfg = SynthConfig(subjects=5, samples_per_modality=2, dim=16, seed=6)
    kw = dict(config=cfg, strategy="fractions", quantizations=(Levels(4),), grid=(8,))
    plain = run_experiment(ExperimentSpec(**kw))["q4"]
    enc = run_experiment(ExperimentSpec(**kw, backend="encrypted", keypair=small_keys))["q4"]
    for c in plain.columns:
        assert plain.cell(8, c) == pytest.approx(enc.cell(8, c))


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(strategy="random")
    with pytest.raises(ValueError):
        ExperimentSpec(backend="encrypted")
    with pytest.raises(ValueError):
        ExperimentSpec(grid=(0,))
