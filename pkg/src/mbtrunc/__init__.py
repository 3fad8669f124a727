"""Training-free template reduction for multi-biometric matching under HE."""

from .core import (
    BinaryVector,
    FeatureVector,
    Modality,
    MultiDataset,
    QuantizedVector,
    Subject,
    Template,
    concat,
    l2_normalize,
)
from .evaluate import (
    DetCurve,
    EerResult,
    ExperimentSpec,
    ReportTable,
    ScoreSet,
    collect_scores,
    det_curve,
    eer,
    run_experiment,
)
from .match import Score, decide, hamming, score_fusion_sum, sed
from .reduce import (
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
    quantize,
    sum_fractions,
)
from .synth import ComparisonSet, SynthConfig, calibrate, enumerate_comparisons, generate

__version__ = "0.1.0"
