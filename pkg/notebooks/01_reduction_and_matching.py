# %% [markdown]
# # Reducing and comparing templates
#
# Quantize, binarize and truncate feature vectors, then compare them with
# the squared Euclidean distance.

# %%
import numpy as np

from mbtrunc import (
    Binarize, ConcatFusion, Fraction, Levels, ReductionPlan, Template,
    apply_plan, fuse_concat, sed,
)
from mbtrunc.synth import SynthConfig, generate

ds = generate(SynthConfig(subjects=4, samples_per_modality=2, dim=512, seed=7))
alice, bob = ds.subjects[0], ds.subjects[1]

# %% [markdown]
# A plan chains quantization, truncation and fusion. Here every modality is
# mapped to 16 levels, the second half of each vector is kept and the three
# halves are concatenated.

# %%
plan = ReductionPlan(Levels(16), Fraction(2, 2), ConcatFusion())
print(plan.to_json())


def fused(subject, j):
    parts = {m: apply_plan(subject.templates[m][j], plan) for m in ds.modalities}
    return fuse_concat(parts)


a0, a1, b0 = fused(alice, 0), fused(alice, 1), fused(bob, 0)
print("fused length", a0.payload.dim)
print("mated SED    ", sed(a0.payload, a1.payload).value)
print("non-mated SED", sed(a0.payload, b0.payload).value)

# %% [markdown]
# For binary templates the SED is the Hamming distance.

# %%
bits = ReductionPlan(Binarize(0.0))
x = apply_plan(alice.templates[ds.modalities[0]][0], bits).payload
y = apply_plan(bob.templates[ds.modalities[0]][0], bits).payload
print(sed(x, y).value, int(np.count_nonzero(x.bits != y.bits)))
