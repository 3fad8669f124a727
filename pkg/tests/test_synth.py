import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbtrunc.core import DEFAULT_MODALITIES, Modality
from mbtrunc.synth import (
    CalibrationError,
    SynthConfig,
    calibrate,
    enumerate_comparisons,
    generate,
    generate_modality,
    single_modality_eer,
    standard_normal,
)


def small(**kw):
    base = dict(subjects=10, samples_per_modality=2, dim=32, seed=3)
    base.update(kw)
    return SynthConfig(**base)


def test_generate_counts_and_norms():
    ds = generate(small())
    assert len(ds.subjects) == 10
    assert len(ds) == sum(len(ds.templates(m)) for m in ds.modalities) == 60
    for m in ds.modalities:
        for t in ds.templates(m):
            assert abs(np.linalg.norm(t.payload.elements) - 1) < 1e-12


def test_deterministic_bitwise():
    a = generate_modality(small(), Modality.IRIS)
    b = generate_modality(small(), Modality.IRIS)
    assert a.tobytes() == b.tobytes()
    assert generate_modality(small(seed=4), Modality.IRIS).tobytes() != a.tobytes()


def test_modalities_use_distinct_streams():
    cfg = small(sigma=0.03, degradation=0.0)
    assert not np.allclose(generate_modality(cfg, Modality.FACE), generate_modality(cfg, Modality.IRIS))


def test_subject_prefix_independent():
    # a subject's samples do not depend on how many subjects are generated
    a = generate_modality(small(subjects=5), Modality.FACE)
    b = generate_modality(small(subjects=9), Modality.FACE)
    assert np.array_equal(a, b[:5])


def test_zero_noise_separates():
    cfg = small(sigma=0.0, degradation=0.0, samples_per_modality=3)
    x = generate_modality(cfg, Modality.FACE)
    assert np.allclose(x[:, 0], x[:, 1])
    assert single_modality_eer(cfg, Modality.FACE, 0.0, 1) == 0.0


def test_standard_normal_moments():
    z = standard_normal(np.random.default_rng(0), 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(subjects=1)
    with pytest.raises(ValueError):
        SynthConfig(samples_per_modality=1)
    with pytest.raises(ValueError):
        SynthConfig(sigma=-0.1)
    with pytest.raises(ValueError):
        SynthConfig.from_dict({"bogus": 1})


def test_config_json_roundtrip():
    cfg = small(sigma={"Face": 0.1, "Fingerprint": 0.2, "Iris": 0.3})
    assert SynthConfig.from_json(cfg.to_json()) == cfg


def test_enumeration_counts():
    pairs = enumerate_comparisons(generate(small(subjects=5, samples_per_modality=5)))
    assert pairs.counts == (5 * 10, 10)
    pairs = enumerate_comparisons(generate(small(subjects=10, samples_per_modality=2)))
    assert pairs.counts == (10, 45)
    assert not pairs.degenerate


def test_enumeration_degenerate_single_subject():
    from mbtrunc.core import MultiDataset

    ds = generate(small(subjects=2, samples_per_modality=3))
    one = MultiDataset(ds.subjects[:1], ds.modalities)
    pairs = enumerate_comparisons(one)
    assert pairs.counts == (3, 0)
    assert pairs.degenerate


def test_enumeration_scarcest_modality():
    from mbtrunc.core import MultiDataset, Subject

    ds = generate(small(subjects=3, samples_per_modality=3))
    s0 = ds.subjects[0]
    temps = dict(s0.templates)
    temps[Modality.IRIS] = temps[Modality.IRIS][:2]
    ds2 = MultiDataset((Subject(s0.subject_id, temps),) + ds.subjects[1:], ds.modalities)
    pairs = enumerate_comparisons(ds2)
    assert pairs.tuple_counts == (2, 3, 3)
    assert pairs.counts == (1 + 3 + 3, 3)
    with pytest.raises(ValueError):
        enumerate_comparisons(ds2, limit_by_scarcest=False)


def test_refs_are_readable():
    pairs = enumerate_comparisons(generate(small(subjects=3)))
    assert pairs.mated_refs()[0] == (("S00000", 0), ("S00000", 1))
    assert pairs.non_mated_refs()[-1] == (("S00001", 0), ("S00002", 0))
    m, n = pairs.sample_pairs()
    assert m.shape == (3, 2, 2) and n.shape == (3, 2, 2)


def test_eer_grows_with_sigma():
    cfg = SynthConfig(subjects=60, samples_per_modality=3, dim=64, seed=1)
    values = [single_modality_eer(cfg, Modality.FACE, s, 7) for s in (0.02, 0.06, 0.15, 0.4)]
    assert values == sorted(values)
    assert values[-1] > values[0]


def test_calibrate_hits_range():
    cfg = SynthConfig(subjects=60, samples_per_modality=3, dim=64, seed=1)
    sigma = calibrate((0.02, 0.06), cfg)
    assert set(sigma) == {"Face", "Fingerprint", "Iris"}
    from mbtrunc.synth import HELD_OUT_OFFSET

    seed = (1 + HELD_OUT_OFFSET) % 2**64
    for m in DEFAULT_MODALITIES:
        total = sigma[m.value] + cfg.degradation[m.value]
        assert 0.02 <= single_modality_eer(cfg, m, total, seed) <= 0.06


def test_calibrate_rejects_bad_range():
    with pytest.raises(ValueError):
        calibrate((0.05, 0.05))
    with pytest.raises(ValueError):
        calibrate((0.06, 0.05))
    with pytest.raises(ValueError):
        calibrate((0.1, 0.5))


def test_calibrate_unreachable_raises():
    cfg = SynthConfig(subjects=20, samples_per_modality=2, dim=16, seed=1)
    with pytest.raises(CalibrationError) as info:
        calibrate((0.49, 0.499), cfg, bounds=(0.0, 0.05))
    assert len(info.value.bracket) == 2


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=2**64 - 1))
def test_any_seed_is_reproducible(seed):
    cfg = SynthConfig(subjects=2, samples_per_modality=2, dim=8, seed=seed)
    assert np.array_equal(generate_modality(cfg, Modality.FACE), generate_modality(cfg, Modality.FACE))
