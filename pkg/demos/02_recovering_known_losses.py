# %% [markdown]
# # Known pair losses as special cases
#
# Per-anchor KL weighting reproduces the pair weights of the lifted
# structure loss at gamma = 1, of the exponential point-to-set triplet
# loss at any gamma, and of the multi-similarity loss once a slack element
# is added to each group.

# %%
import numpy as np

from dropairs import DroConfig, EmbeddingBatch
from dropairs.recovery import equivalence_report

rng = np.random.default_rng(1)
labels = np.array([0, 0, 1, 1, 2, 2, 0, 1])
emb = rng.standard_normal((8, 4))
batch = EmbeddingBatch.create(emb, emb, labels)

# %% [markdown]
# The identities hold where every margin loss is positive, so the margin
# is set large enough for that.

# %%
report = equivalence_report(batch, DroConfig(variant="kl-grouped", m=2.0, gamma=0.5))
print(report.to_text())

# %% [markdown]
# With the default margin some pairs sit inside the hinge and the report
# says so instead of comparing.

# %%
print(equivalence_report(batch, DroConfig(m=0.2)).status)
