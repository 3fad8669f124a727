# %% [markdown]
# # EER against template dimension
#
# Runs the fraction experiment on a synthetic three-modality dataset. Rows
# give the mean EER (in percent) over all fractions and its spread.

# %%
import os

from mbtrunc import Binarize, ExperimentSpec, SynthConfig, run_experiment

subjects = int(os.environ.get("MBTRUNC_SUBJECTS", 200))
config = SynthConfig(subjects=subjects, seed=0)

# %%
tables = run_experiment(ExperimentSpec(config, "fractions", (None, Binarize(0.0))))
for table in tables.values():
    print(table.to_text(), end="\n\n")

# %% [markdown]
# The fused column at 128 elements per modality can be compared with the best
# single modality at full length. The total-length variant splits 512
# elements over the three modalities (171/171/170).

# %%
flt = tables["float"]
best = min(flt.mean(512, m) for m in ("Face", "Fingerprint", "Iris"))
total = run_experiment(ExperimentSpec(config, "fractions", grid=(512,), interpretation="total"))
print(f"best single 512:  {100 * best:.2f}%")
print(f"fused 3 x 128:    {100 * flt.mean(128, 'All'):.2f}%")
print(f"fused 512 total:  {100 * total['float'].mean(512, 'All'):.2f}%")
