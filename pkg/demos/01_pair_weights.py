# %% [markdown]
# # Robust pair weights on one mini-batch
#
# Every ordered pair in a batch gets a margin loss. Instead of averaging
# those losses, each uncertainty set picks the weighting that makes the
# weighted loss as large as it can within its budget.

# %%
import numpy as np

from dropairs import DroConfig, EmbeddingBatch, build_pair_system, loss_matrix, similarity, solve

rng = np.random.default_rng(0)
labels = np.repeat(np.arange(4), 3)
emb = rng.standard_normal((labels.size, 8))
batch = EmbeddingBatch.create(emb, emb, labels)
pairs = build_pair_system(labels)
sim = similarity(batch)
print(f"{len(pairs)} ordered pairs: {pairs.n_pos} positive, {pairs.n_neg} negative")

# %% [markdown]
# Most pairs are easy and have zero loss. The robust solvers drop them.

# %%
losses = loss_matrix(sim, pairs, DroConfig())
print(f"{losses.n_active} pairs carry a positive loss")

# %%
for variant in ("avg", "max", "topk", "topk-pn", "kl", "chi2", "kl-grouped"):
    cfg = DroConfig(variant=variant, K=8, gamma=0.1, rho=0.25)
    w = solve(losses, pairs, cfg)
    top = np.argsort(-w.weights, kind="stable")[:3]
    print(f"{variant:>10}  value={w.robust_value:.4f}  support={w.selected.size:3d}  "
          f"heaviest pairs={[pairs.pairs()[k] for k in top]}")

# %% [markdown]
# The KL temperature interpolates between the hardest pair (small gamma)
# and the plain mean over active pairs (large gamma).

# %%
for gamma in (0.01, 0.1, 1.0, 100.0):
    w = solve(losses, pairs, DroConfig(variant="kl", gamma=gamma))
    print(f"gamma={gamma:<6} value={w.robust_value:.4f}  max weight={w.weights.max():.3f}")
