# %% [markdown]
# # Heuristic miners next to top-K selection
#
# Semihard, distance-weighted and multi-similarity mining each return a
# 0/1 selection. Top-K per side does the same with one sort.

# %%
import time

import numpy as np

from dropairs import DroConfig, EmbeddingBatch, build_pair_system, loss_matrix, similarity
from dropairs import dro, mining

rng = np.random.default_rng(2)
labels = np.repeat(np.arange(32), 5)
emb = rng.standard_normal((labels.size, 32))
batch = EmbeddingBatch.create(emb, emb, labels)
pairs = build_pair_system(labels)
sim = similarity(batch)
losses = loss_matrix(sim, pairs, DroConfig())

# %%
selectors = {
    "semihard": lambda: mining.semihard_select(sim, pairs, 0.5, 0.2),
    "dws": lambda: mining.dws_select(sim, pairs, 32, 8, rng_seed=0, losses=losses),
    "ms-mining": lambda: mining.ms_mining_select(sim, pairs, 0.1, losses),
    "topk-pn": lambda: dro.solve_topk_pn(losses, pairs, 2 * labels.size),
}
for name, fn in selectors.items():
    t0 = time.perf_counter()
    w = fn()
    ms = 1000 * (time.perf_counter() - t0)
    pos = int(pairs.is_pos[w.selected].sum())
    print(f"{name:>9}: {w.selected.size:5d} pairs ({pos} positive), {ms:6.2f} ms")
