# %% [markdown]
# # Recall as the pair imbalance grows
#
# With M instances per class and B examples per batch there are B(M-1)
# positive and B(B-M) negative ordered pairs, so P/N falls like 1/B.

# %%
import statistics
import warnings

from dropairs.core import DroPairsWarning
from dropairs import TrainConfig, gen_synthetic, imbalance_sweep
from dropairs.evaluation import balanced_pair_ratio

for b in (20, 40, 80, 160):
    print(f"B={b:3d}  P/N={balanced_pair_ratio(b, 5):.3f}")

# %% [markdown]
# Train each method at each batch size on three seeds and keep the median.
# The data has ten classes, so the largest setting uses all of them.

# %%
warnings.simplefilter("ignore", DroPairsWarning)  # the B=80 class fallback
methods = ["avg", "semihard", "dws", "topk", "topk-pn", "kl"]
cells = {}
for seed in range(3):
    data = gen_synthetic(10, 60, 16, 0.5, seed=seed)
    for row in imbalance_sweep(data, TrainConfig(seed=seed), [20, 40, 80], methods):
        cells.setdefault((row.method, row.batch_size), []).append(row.recall1)

print("method     B=20   B=40   B=80")
for m in methods:
    print(f"{m:<9}" + "".join(f"  {statistics.median(cells[(m, b)]):.3f}" for b in (20, 40, 80)))
