"""Heuristic pair-selection baselines: semihard, distance-weighted, multi-similarity mining.

Each selector returns a binary-selection :class:`WeightAssignment`. The
robust value is the mean margin/base loss over the selected pairs when a
loss table is available, else 0.
"""

import math

import numpy as np

from .core import ConfigurationError, PairLossMatrix, PairSystem, SimilarityMatrix, WeightAssignment
from .losses import margin_loss


def _assignment(selected, n_pairs, loss=None):
    w = np.zeros(n_pairs)
    w[selected] = 1.0
    sel = np.flatnonzero(w)
    value = math.fsum(loss[sel]) / sel.size if (loss is not None and sel.size) else 0.0
    return WeightAssignment(w, "binary-selection", value)


def semihard_select(sim: SimilarityMatrix, pairs: PairSystem, lam=0.5, m=0.2) -> WeightAssignment:
    """Active positives plus negatives in the band (lam - m, lam).

    ``lam`` stands in for the positive similarity of a triplet. An anchor
    with no negative in the band falls back to its hardest negative below
    ``lam``; if there is none it contributes no negative.
    """
    s = pairs.gather(sim.values)
    loss, _ = margin_loss(s, pairs.y, m, lam)
    loss = np.atleast_1d(loss)
    chosen = [np.flatnonzero(pairs.is_pos & (loss > 0))]
    for g in pairs.neg_groups:
        if g.size == 0:
            continue
        sg = s[g]
        band = g[(sg > lam - m) & (sg < lam)]
        if band.size:
            chosen.append(band)
            continue
        below = sg < lam
        if below.any():
            cand = g[below]
            chosen.append(cand[[np.argmax(s[cand])]])
    return _assignment(np.concatenate(chosen), len(pairs), loss)


def dws_log_density(dist, d):
    """log of the (unnormalized) density of pairwise distances on the unit sphere in R^d."""
    dist = np.asarray(dist, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (d - 2.0) * np.log(dist)
        if d != 3:
            out = out + 0.5 * (d - 3.0) * np.log(np.maximum(1.0 - 0.25 * dist ** 2, 0.0))
    return out


def dws_select(sim: SimilarityMatrix, pairs: PairSystem, d: int, count_per_anchor: int,
               clip_tau=100.0, rng_seed=0, losses: PairLossMatrix | None = None) -> WeightAssignment:
    """All positives plus negatives sampled inversely to the sphere distance density.

    Per anchor, ``count_per_anchor`` negatives are drawn without replacement
    with probability proportional to ``min(clip_tau, 1 / q(dist))`` where
    ``dist = sqrt(2 - 2 S)``.
    """
    if d < 3:
        raise ConfigurationError(f"distance-weighted sampling needs d >= 3, got {d}")
    rng = np.random.default_rng(rng_seed)
    s = pairs.gather(sim.values)
    dist = np.sqrt(np.maximum(2.0 - 2.0 * s, 0.0))
    log_w = np.minimum(math.log(clip_tau), -dws_log_density(dist, d))
    chosen = [np.flatnonzero(pairs.is_pos)]
    for g in pairs.neg_groups:
        if g.size == 0:
            continue
        if count_per_anchor >= g.size:
            chosen.append(g)
            continue
        lw = log_w[g]
        prob = np.exp(lw - lw.max())
        chosen.append(rng.choice(g, size=count_per_anchor, replace=False, p=prob / prob.sum()))
    return _assignment(np.concatenate(chosen), len(pairs), None if losses is None else losses.loss)


def ms_mining_select(sim: SimilarityMatrix, pairs: PairSystem, epsilon=0.1,
                     losses: PairLossMatrix | None = None) -> WeightAssignment:
    """Multi-similarity pair mining.

    Negatives with S_ij > min positive S - epsilon and positives with
    S_ij < max negative S + epsilon, per anchor. An anchor lacking one side
    keeps every pair of the side it has.
    """
    s = pairs.gather(sim.values)
    chosen = []
    for pg, ng in zip(pairs.pos_groups, pairs.neg_groups):
        if pg.size and ng.size:
            chosen.append(ng[s[ng] > s[pg].min() - epsilon])
            chosen.append(pg[s[pg] < s[ng].max() + epsilon])
        else:
            chosen.append(pg if pg.size else ng)
    sel = np.concatenate(chosen) if chosen else np.zeros(0, dtype=int)
    return _assignment(sel, len(pairs), None if losses is None else losses.loss)
