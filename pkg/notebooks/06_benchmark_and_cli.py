# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Occlusion benchmark
#
# PCA, a single global model and the part-based model scored on the same
# balanced pair lists.  This uses fewer seeds than the acceptance run.

# %%
from chtf.benchmark import METHODS, BenchConfig, run_benchmark

cfg = BenchConfig(reps=3, methods=METHODS)
report = run_benchmark(cfg)
for method, mean, std, auc, n, pair_hash in report.rows():
    print(f"{method:14s} {mean:.3f} +/- {std:.3f}  auc {auc:.3f}")

# %% [markdown]
# Without occlusion and with views and lights close to a common pose every
# method is near perfect.

# %%
easy = run_benchmark(BenchConfig(reps=2, occlusion=0.0, spread=0.02))
print({m: round(r.mean, 3) for m, r in easy.results.items()})

# %% [markdown]
# ## Same thing from the shell
#
# ```
# chtf bench --output out/bench --reps 3 --method all
# chtf synth --output out/synth --dims 64x10x6x6
# chtf train --input out/synth/ensemble.tnsr --output out/model --bank grid:2x2
# chtf project --input out/synth/ensemble.tnsr --model out/model --output out/sigs.csv
# ```
