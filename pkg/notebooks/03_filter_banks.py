# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Filter banks
#
# A bank splits the measurement mode into parts.  Segmentation banks are
# masks, pyramid banks are band-pass operators.

# %%
import numpy as np

from chtf.filters import grid_bank, make_pyramid_bank, make_segmentation_bank

rng = np.random.default_rng(2)
w, h = 8, 6
image = rng.random(w * h)

# %% [markdown]
# ## Grid of parts
# The masked parts add back up to the image exactly.

# %%
grid = grid_bank(w, h, 2, 2)
parts = [grid.apply(s, image) for s in range(len(grid))]
print(grid.partition_flag, np.array_equal(sum(parts), image))
print(grid.support(0).reshape(3, 4))

# %%
overlap = make_segmentation_bank(w * h, [range(0, 30), range(20, 48)])
print("overlapping regions form a partition:", overlap.partition_flag)

# %% [markdown]
# ## Pyramids
# Gaussian levels blur progressively; Laplacian levels are band differences and
# sum back to the image up to rounding.

# %%
lap = make_pyramid_bank(w, h, 3, "laplacian")
bands = [lap.apply(s, image) for s in range(len(lap))]
print([round(float(np.linalg.norm(b)), 3) for b in bands])
print("collapse error", np.max(np.abs(sum(bands) - image)))
gauss = make_pyramid_bank(w, h, 3, "gaussian")
print([round(float(np.std(gauss.apply(s, image))), 4) for s in range(3)])
