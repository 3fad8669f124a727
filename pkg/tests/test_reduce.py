import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mbtrunc.core import BinaryVector, FeatureVector, Modality, QuantizedVector, Template, concat
from mbtrunc.reduce import (
    Binarize,
    ConcatFusion,
    Fraction,
    Interleave,
    Levels,
    ReductionPlan,
    SumFractions,
    apply_plan,
    binarize,
    fraction,
    fuse_concat,
    interleave,
    interleave_literal,
    quantize,
    spaced_indices,
    sum_fractions,
)

from oracles import quantize_exact, sum_fractions_loop

finite = st.floats(-4, 4, allow_nan=False, allow_infinity=False)


def test_binarize_boundary_maps_to_one():
    out = binarize(FeatureVector([-0.3, 0.0, 0.7]), 0.0)
    assert out.bits.tolist() == [0, 1, 1]


def test_binarize_all_negative():
    assert binarize(FeatureVector([-1.0, -0.5, -1e-12]), 0.0).bits.tolist() == [0, 0, 0]


def test_binarize_matches_sign_scan(rng):
    v = rng.standard_normal(512)
    expected = [0 if x < 0 else 1 for x in v]
    assert binarize(FeatureVector(v)).bits.tolist() == expected


@pytest.mark.parametrize("x,q,expected", [(-1.0, 4, 0), (1.0, 4, 3)])
def test_quantize_endpoints(x, q, expected):
    assert quantize(FeatureVector([x]), q).levels.tolist() == [expected]


def test_quantize_quarter_int8():
    # floor(0.625 * 255) evaluated in exact rational arithmetic
    assert quantize_exact(0.25, 256) == 159
    assert quantize(FeatureVector([0.25]), 256).levels.tolist() == [159]


def test_quantize_clamps_and_rejects(rng):
    out = quantize(FeatureVector([-7.0, 9.0]), 16)
    assert out.levels.tolist() == [0, 15]
    with pytest.raises(ValueError):
        quantize(FeatureVector([0.1]), 16, (1.0, 1.0))
    with pytest.raises(ValueError):
        quantize(FeatureVector([0.1]), 12)


@settings(max_examples=200)
@given(x=finite, l=st.integers(1, 8))
def test_quantize_matches_exact_rational(x, l):
    q = 2**l
    assert quantize(np.array([x]), q)[0] == quantize_exact(x, q)


def test_fraction_example():
    v = FeatureVector(np.arange(1.0, 9.0))
    assert fraction(v, 4, 2).elements.tolist() == [3.0, 4.0]
    assert fraction(v, 1, 1) == v


@pytest.mark.parametrize("k", [2, 4, 8])
def test_fraction_partition_reconstructs(rng, k):
    v = FeatureVector(rng.standard_normal(64))
    assert concat([fraction(v, k, i) for i in range(1, k + 1)]) == v


@pytest.mark.parametrize("k,i", [(3, 1), (4, 0), (4, 5)])
def test_fraction_rejects(k, i):
    with pytest.raises(ValueError):
        fraction(FeatureVector(np.ones(8)), k, i)


def test_interleave_examples():
    v = FeatureVector(np.arange(1.0, 9.0))
    assert interleave(v, 2).elements.tolist() == [1.0, 3.0, 5.0, 7.0]
    assert interleave(v, 1) == v
    assert interleave(FeatureVector(np.ones(512)), 4).dim == 128
    with pytest.raises(ValueError):
        interleave(v, 3)


def test_interleave_literal_gives_x_indices():
    out = interleave_literal(np.arange(512), 4)
    assert out.tolist() == [0, 170, 340, 511]


def test_spaced_indices_generalize_stride():
    assert np.array_equal(spaced_indices(512, 128), np.arange(0, 512, 4))
    assert spaced_indices(512, 171).size == 171


def test_sum_examples():
    assert sum_fractions(FeatureVector([1.0, 2.0, 3.0, 4.0]), 2).elements.tolist() == [4.0, 6.0]
    v = FeatureVector([1.0, 2.0, 3.0, 4.0])
    assert sum_fractions(v, 1) == v
    out = sum_fractions(BinaryVector([1, 0, 1, 1]), 2)
    assert isinstance(out, QuantizedVector)
    assert out.levels.tolist() == [2, 1]
    assert out.q == 4


@settings(max_examples=100)
@given(arrays(np.int64, st.sampled_from([8, 16, 32, 64]), elements=st.integers(-50, 50)),
       st.sampled_from([1, 2, 4, 8]))
def test_sum_equals_brute_force(v, k):
    assert sum_fractions(v, k).tolist() == sum_fractions_loop(v.tolist(), k)
    parts = sum(fraction(v, k, i) for i in range(1, k + 1))
    assert np.array_equal(sum_fractions(v, k), parts)


@settings(max_examples=100)
@given(arrays(np.float64, 64, elements=finite))
def test_binarize_equals_two_level_quantize(v):
    # with the range's upper end at the threshold, the single level step sits at 0
    m = float(np.abs(v).max()) + 1.0
    assert np.array_equal(binarize(v, 0.0), quantize(v, 2, (-m, 0.0)))


@settings(max_examples=50)
@given(st.sampled_from([64, 128, 512]), st.sampled_from([1, 2, 4, 8, 16]))
def test_dimension_bookkeeping(d, k):
    v = np.zeros(d)
    assert fraction(v, k, 1).size == d // k
    assert interleave(v, k).size == d // k
    assert sum_fractions(v, k).size == d // k


def test_operators_work_on_matrices(rng):
    x = rng.standard_normal((5, 16))
    assert fraction(x, 4, 3).shape == (5, 4)
    assert np.array_equal(interleave(x, 4), x[:, ::4])
    assert np.allclose(sum_fractions(x, 2), x[:, :8] + x[:, 8:])


def _t(v, m=None, sid="s1"):
    return Template(FeatureVector(v, modality=m), sid, 0)


def test_apply_plan_identity_and_dims(rng):
    t = _t(rng.standard_normal(512))
    assert apply_plan(t, ReductionPlan()) is t
    out = apply_plan(t, ReductionPlan(Binarize(0.0), Fraction(2, 1)))
    assert isinstance(out.payload, BinaryVector) and out.dim == 256
    assert out.provenance == ReductionPlan(Binarize(0.0), Fraction(2, 1))
    out = apply_plan(t, ReductionPlan(Levels(4), Interleave(4)))
    assert out.dim == 128 and isinstance(out.payload, QuantizedVector)
    assert 0 <= out.payload.levels.min() and out.payload.levels.max() <= 3


def test_apply_plan_is_deterministic(rng):
    t = _t(rng.standard_normal(64))
    plan = ReductionPlan(Levels(16), SumFractions(4))
    assert apply_plan(t, plan) == apply_plan(t, plan)


def test_apply_plan_rejects_bad_k(rng):
    with pytest.raises(ValueError, match="divisor"):
        apply_plan(_t(rng.standard_normal(512)), ReductionPlan(truncation=Fraction(3, 1)))


def test_plan_json_roundtrip():
    plan = ReductionPlan(Levels(16, (-1, 1)), Fraction(4, 2), ConcatFusion(("Face", "Iris")))
    assert ReductionPlan.from_json(plan.to_json()) == plan
    plan = ReductionPlan(Binarize(0.0), Interleave(8))
    assert ReductionPlan.from_dict(plan.to_dict()) == plan
    assert ReductionPlan.from_dict({"truncation": {"kind": "sum", "k": 2}}).truncation == SumFractions(2)
    with pytest.raises(ValueError):
        ReductionPlan.from_dict({"truncation": {"kind": "pca"}})
    with pytest.raises(ValueError):
        ReductionPlan.from_dict({"bogus": 1})


def test_fuse_concat(rng):
    temps = {m: _t(rng.standard_normal(512), m) for m in Modality}
    fused = fuse_concat(temps)
    assert fused.dim == 1536
    assert np.array_equal(fused.payload.elements[512:1024], temps[Modality.FINGERPRINT].payload.elements)


def test_fuse_concat_67_percent(rng):
    lengths = {Modality.FACE: 171, Modality.FINGERPRINT: 171, Modality.IRIS: 170}
    temps = [_t(rng.standard_normal(n), m) for m, n in lengths.items()]
    assert fuse_concat(temps).dim == 512


def test_fuse_concat_single_and_errors(rng):
    t = _t(rng.standard_normal(8), Modality.FACE)
    assert fuse_concat([t]).payload == t.payload
    with pytest.raises(ValueError, match="missing"):
        fuse_concat([t, _t(rng.standard_normal(8), Modality.IRIS)])
    mixed = [t, Template(BinaryVector([1] * 8, modality=Modality.FINGERPRINT), "s1", 0),
             _t(rng.standard_normal(8), Modality.IRIS)]
    with pytest.raises(ValueError, match="kinds"):
        fuse_concat(mixed)
