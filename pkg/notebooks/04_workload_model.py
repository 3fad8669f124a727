# %% [markdown]
# # Packed-HE operation counts
#
# A packed inner product costs one Hadamard product per ciphertext and a
# log2 rotation tree to sum the slots.

# %%
import json

from mbtrunc.he import compare_workloads, workload_estimate

for dim in (64, 128, 256, 512, 1536, 8192):
    r = workload_estimate(dim, slots=4096)
    print(dim, r.ciphertexts, r.rotations, r.total_operations)

# %%
doc = compare_workloads(workload_estimate(512, "binary_packed"), workload_estimate(1536, "float_packed"))
print(json.dumps(doc, indent=2))
