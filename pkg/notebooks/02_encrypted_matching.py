# %% [markdown]
# # Matching under Paillier encryption
#
# The reference is encrypted element by element. The server combines the
# ciphertexts with the plaintext probe and returns an encrypted distance that
# only the key holder can open.

# %%
import random

import numpy as np

from mbtrunc.he import decrypt, encrypted_sed, enroll_encrypted, keygen
from mbtrunc.reduce import fraction_indices

kp = keygen(512, seed=1)  # small test key; use the 2048-bit default in practice
rng = random.Random(1)
r = np.random.default_rng(1)

y = r.integers(0, 16, 512)  # enrolled reference, 16 levels
x = r.integers(0, 16, 512)  # probe

# %%
enc = enroll_encrypted(kp.public, y, q=16, with_squares=True, rng=rng)
score = decrypt(kp.secret, encrypted_sed(kp.public, x, enc))
print(score, int(((x - y) ** 2).sum()))

# %% [markdown]
# Truncation happens after enrollment: the server only touches the selected
# ciphertexts, so one gallery serves every fraction.

# %%
for i in range(1, 5):
    sel = fraction_indices(512, 4, i)
    got = decrypt(kp.secret, encrypted_sed(kp.public, x, enc, selection=sel))
    print(f"fraction {i}/4:", got, int(((x[sel] - y[sel]) ** 2).sum()))
