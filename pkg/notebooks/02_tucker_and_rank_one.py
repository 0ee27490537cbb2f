# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Tucker models and rank-1 fits

# %%
import numpy as np

from chtf.decomposition import m_mode_svd, rank_one_approx, reconstruct, truncate, tucker_als
from chtf.synthetic import planted_tucker

rng = np.random.default_rng(1)
d, core, factors = planted_tucker(rng, (12, 8, 6), (3, 2, 2), noise=0.05)

# %% [markdown]
# ## M-mode SVD
# The full decomposition reproduces the data; the mode spectra show the
# planted ranks through the noise.

# %%
full = m_mode_svd(d)
print("full-rank error", np.linalg.norm(reconstruct(full) - d))
for m, sv in enumerate(full.mode_singular_values):
    print(m, np.round(sv[:5], 3))

# %% [markdown]
# ## Truncation and alternating refinement

# %%
cut = truncate(full, [3, 2, 2])
hooi = tucker_als(d, [3, 2, 2], tol=1e-12)
print("truncated residual", np.linalg.norm(reconstruct(cut) - d))
print("refined residual  ", np.linalg.norm(reconstruct(hooi) - d))
print("loss per sweep", np.round(hooi.trace.values, 6))

# %% [markdown]
# ## Rank-1 approximation
# For a matrix it is the leading singular triplet; for higher orders it is a
# power iteration started from the leading singular vectors.

# %%
vecs = [rng.standard_normal(n) for n in (4, 5, 3)]
x = np.multiply.outer(np.multiply.outer(vecs[0], vecs[1]), vecs[2])
f = rank_one_approx(x + 0.01 * rng.standard_normal(x.shape))
print("scale", f.scale, "iterations", f.iterations)
for got, want in zip(f.vectors, vecs):
    print(abs(got @ want) / np.linalg.norm(want))
