# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Tensor basics
#
# Tensors are plain float64 ndarrays.  Mode 0 is the measurement mode (pixels),
# the remaining modes are causal factors (people, views, lights, ...).

# %%
import numpy as np

from chtf import tnsr
from chtf.tensor import kronecker_chain, matrixize, mode_product, multi_mode_product, unmatrixize, vectorize

t = np.arange(24, dtype=float).reshape(2, 3, 4)

# %% [markdown]
# ## Unfolding
# Mode-m unfolding puts mode m on the rows; the remaining indexes run with the
# lowest mode fastest.

# %%
for m in range(3):
    print(f"mode {m}: {matrixize(t, m).shape}")
print(matrixize(t, 1))

# %%
assert np.array_equal(unmatrixize(matrixize(t, 2), 2, t.shape), t)

# %% [markdown]
# ## Mode products
# A mode product multiplies every mode-m fiber by a matrix.  A chain of them is
# a Kronecker product acting on the vectorized tensor.

# %%
rng = np.random.default_rng(0)
b0, b1, b2 = rng.standard_normal((5, 2)), rng.standard_normal((3, 3)), rng.standard_normal((2, 4))
chain = multi_mode_product(t, [b0, b1, b2])
print(chain.shape)
print(np.allclose(vectorize(chain), kronecker_chain([b2, b1, b0]) @ vectorize(t)))
print(np.allclose(mode_product(t, 1, b1), np.einsum("ij,ajb->aib", b1, t)))

# %% [markdown]
# ## Files
# The binary format is a small header followed by little-endian doubles.

# %%
blob = tnsr.dumps(t)
print(blob[:4], len(blob))
print(np.array_equal(tnsr.loads(blob), t))
