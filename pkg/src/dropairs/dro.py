"""Robust pair weighting: max over p in U of sum p_ij l_ij (minus a regularizer).

Every solver returns a :class:`WeightAssignment` over the *full* pair list.
Except for :func:`solve_avg`, zero-loss pairs are dropped before the weights
are computed (pass ``keep_zero_loss=True`` to keep them).
"""

import math
import warnings

import numpy as np

from .core import (
    ConfigurationError,
    DroConfig,
    DroPairsWarning,
    EmptyActiveSetError,
    EmptyInputError,
    PairLossMatrix,
    PairSystem,
    WeightAssignment,
)


def _candidates(losses: PairLossMatrix, keep_zero_loss=False):
    if keep_zero_loss:
        return np.arange(len(losses))
    return np.flatnonzero(losses.active)


def top_indices(values, idx, k):
    """Positions (from ``idx``) of the k largest ``values[idx]``; ties go to the lower index.

    ``idx`` must be sorted ascending.
    """
    vals = values[idx]
    n = idx.size
    if k >= n:
        return idx
    kth = np.partition(vals, n - k)[n - k]
    above = idx[vals > kth]
    tied = idx[vals == kth]
    return np.concatenate([above, tied[: k - above.size]])


def solve_avg(losses: PairLossMatrix) -> WeightAssignment:
    n = len(losses)
    if n == 0:
        raise EmptyInputError("no pairs to average over")
    w = np.full(n, 1.0 / n)
    return WeightAssignment(w, "global-simplex", math.fsum(losses.loss) / n)


def solve_max(losses: PairLossMatrix, keep_zero_loss=False) -> WeightAssignment:
    idx = _candidates(losses, keep_zero_loss)
    if idx.size == 0:
        raise EmptyActiveSetError("every pair has zero loss")
    best = idx[np.argmax(losses.loss[idx])]
    w = np.zeros(len(losses))
    w[best] = 1.0
    return WeightAssignment(w, "global-simplex", losses.loss[best])


def solve_topk(losses: PairLossMatrix, K: int, keep_zero_loss=False) -> WeightAssignment:
    """Uniform weight 1/K on the K largest losses (the capped-simplex maximizer)."""
    if K <= 0:
        raise ConfigurationError(f"K must be positive, got {K}")
    idx = _candidates(losses, keep_zero_loss)
    if idx.size == 0:
        raise EmptyActiveSetError("every pair has zero loss")
    if K > idx.size:
        warnings.warn(f"K={K} exceeds the {idx.size} active pairs; using K={idx.size}",
                      DroPairsWarning, stacklevel=2)
        K = idx.size
    top = top_indices(losses.loss, idx, K)
    w = np.zeros(len(losses))
    w[top] = 1.0 / K
    return WeightAssignment(w, "global-simplex", math.fsum(losses.loss[top]) / K)


def solve_topk_pn(losses: PairLossMatrix, pairs: PairSystem, K: int,
                  keep_zero_loss=False) -> WeightAssignment:
    """Pick the K/2 hardest positives and the K/2 hardest negatives.

    A side with fewer than K/2 active pairs contributes all of them.
    """
    if K < 2 or K % 2:
        raise ConfigurationError(f"topk-pn needs an even K >= 2, got {K}")
    idx = _candidates(losses, keep_zero_loss)
    pos = pairs.is_pos[idx]
    chosen = [top_indices(losses.loss, side, K // 2) for side in (idx[pos], idx[~pos]) if side.size]
    if not chosen:
        raise EmptyActiveSetError("no active positive or negative pair")
    sel = np.concatenate(chosen)
    w = np.zeros(len(losses))
    w[sel] = 1.0
    return WeightAssignment(w, "binary-selection", math.fsum(losses.loss[sel]) / sel.size)


def solve_kl(losses: PairLossMatrix, gamma: float, keep_zero_loss=False) -> WeightAssignment:
    """KL-regularized weights: softmax(l / gamma) over the active pairs.

    The robust value is ``gamma * log(mean(exp(l / gamma)))``, i.e. the
    objective with the uniform reference taken over the active set.
    """
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    idx = _candidates(losses, keep_zero_loss)
    if idx.size == 0:
        raise EmptyActiveSetError("every pair has zero loss")
    z = losses.loss[idx] / gamma
    zmax = z.max()
    e = np.exp(z - zmax)
    total = e.sum()
    w = np.zeros(len(losses))
    w[idx] = e / total
    value = gamma * (zmax + math.log(total) - math.log(idx.size))
    return WeightAssignment(w, "global-simplex", value)


def chi2_weights(loss, rho):
    """Maximize p.l over the simplex intersected with the chi-square ball.

    Ball: sum (n p_i - 1)^2 / (2n) <= rho / n, i.e. ||p - 1/n|| <= sqrt(2 rho) / n.
    Returns ``(p, value)``.
    """
    loss = np.asarray(loss, dtype=np.float64)
    n = loss.size
    u = np.full(n, 1.0 / n)
    mean = math.fsum(loss) / n
    if np.ptp(loss) == 0.0:
        return u, float(loss[0])
    dev = loss - mean
    dev -= dev.mean()  # fsum mean can sit one ulp off, leaving dev one-signed
    dnorm = math.sqrt(float(dev @ dev))
    radius2 = 2.0 * rho / n ** 2

    p = u + math.sqrt(radius2) * dev / dnorm
    if p.min() >= 0.0:
        var = float(dev @ dev) / n
        return p, mean + math.sqrt(2.0 * rho * var / n)

    def spread(eta):
        q = np.maximum(loss - eta, 0.0)
        q /= q.sum()
        return q, float((q - u) @ (q - u))

    lmax = loss.max()
    top = loss == lmax
    q_top = top / top.sum()
    if float((q_top - u) @ (q_top - u)) <= radius2:
        return q_top, float(lmax)

    # distance to uniform grows with eta; positive-solution case failed, so eta >= min(loss)
    lo, hi = float(loss.min()), float(lmax)
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if spread(mid)[1] > radius2:
            hi = mid
        else:
            lo = mid
    q, _ = spread(lo)

    # exact rescaling on the identified support: p_i = 1/k + b (l_i - mean_S)
    support = loss > lo
    k = int(support.sum())
    ds = loss[support] - loss[support].mean()
    fixed = k * (1.0 / k - 1.0 / n) ** 2 + (n - k) / n ** 2
    ss = float(ds @ ds)
    if ss > 0 and radius2 >= fixed:
        b = math.sqrt((radius2 - fixed) / ss)
        cand = np.zeros(n)
        cand[support] = 1.0 / k + b * ds
        if cand.min() >= 0.0:
            q = cand
    return q, float(q @ loss)


def solve_chi2(losses: PairLossMatrix, rho: float, keep_zero_loss=False) -> WeightAssignment:
    if rho <= 0:
        raise ConfigurationError(f"rho must be positive, got {rho}")
    idx = _candidates(losses, keep_zero_loss)
    if idx.size == 0:
        raise EmptyActiveSetError("every pair has zero loss")
    p, value = chi2_weights(losses.loss[idx], rho)
    w = np.zeros(len(losses))
    w[idx] = p
    return WeightAssignment(w, "global-simplex", value)


def _per_anchor(values, pairs: PairSystem):
    """Broadcast a scalar or length-B array to one value per pair."""
    v = np.broadcast_to(np.asarray(values, dtype=np.float64), (pairs.batch_size,))
    if np.any(v <= 0):
        raise ConfigurationError("group temperatures must be positive")
    return v[pairs.anchor]


def _group_softmax(loss, pairs: PairSystem, idx, gamma_pos, gamma_neg, slack_loss=None):
    """Softmax of l/gamma inside each (anchor, sign) group restricted to ``idx``.

    With ``slack_loss`` (one value per pair sign, pos then neg) every group gets
    one extra element carrying that loss. Returns weights, per-group slack
    weights and the summed regularized value.
    """
    n_groups = 2 * pairs.batch_size
    gid = pairs.group_ids()[idx]
    pos = pairs.y[idx] > 0
    gam_pair = np.where(pos, _per_anchor(gamma_pos, pairs)[idx], _per_anchor(gamma_neg, pairs)[idx])
    z = loss[idx] / gam_pair

    gmax = np.full(n_groups, -np.inf)
    np.maximum.at(gmax, gid, z)
    counts = np.bincount(gid, minlength=n_groups)
    gam_group = np.empty(n_groups)
    gam_group[0::2] = np.broadcast_to(np.asarray(gamma_pos, float), (pairs.batch_size,))
    gam_group[1::2] = np.broadcast_to(np.asarray(gamma_neg, float), (pairs.batch_size,))

    if slack_loss is not None:
        zs = np.empty(n_groups)
        zs[0::2] = slack_loss[0] / gam_group[0::2]
        zs[1::2] = slack_loss[1] / gam_group[1::2]
        gmax = np.where(counts > 0, np.maximum(gmax, zs), zs)

    e = np.exp(z - gmax[gid])
    gsum = np.bincount(gid, weights=e, minlength=n_groups)
    slack = np.zeros(n_groups)
    size = counts.astype(np.float64)
    if slack_loss is not None:
        es = np.exp(zs - gmax)
        gsum = gsum + es
        slack = es / gsum
        size = size + 1.0

    w = np.zeros(len(loss))
    w[idx] = e / gsum[gid]
    live = size > 0
    value = math.fsum(gam_group[live] * (gmax[live] + np.log(gsum[live]) - np.log(size[live])))
    if slack_loss is None:
        slack = None
    return w, slack, value


def solve_kl_grouped(losses: PairLossMatrix, pairs: PairSystem, gamma_pos, gamma_neg,
                     keep_zero_loss=False) -> WeightAssignment:
    """Per-anchor KL-regularized weights, normalized separately over positives and negatives.

    Groups with no active pair get zero weight. ``gamma_pos``/``gamma_neg`` may
    be scalars or one value per anchor.
    """
    idx = _candidates(losses, keep_zero_loss)
    w, _, value = _group_softmax(losses.loss, pairs, idx, gamma_pos, gamma_neg)
    return WeightAssignment(w, "per-anchor", value)


def solve_ms_recovery(losses: PairLossMatrix, pairs: PairSystem, cfg: DroConfig,
                      keep_zero_loss=None) -> WeightAssignment:
    """Grouped KL weights with one extra zero-loss slack element per group.

    The slack element's loss is chosen so that, for margin-loss pairs,
        p+_ij = 1 / (exp((S_ij - c+)/g+) + sum_k exp((S_ij - S_ik)/g+))
        p-_ij = 1 / (exp((c- - S_ij)/g-) + sum_k exp((S_ik - S_ij)/g-))
    At the default ties (c+ = lam + m, c- = lam - m) the slack loss is zero.
    """
    r = cfg.resolved()
    if r["gamma_pos"] <= 0 or r["gamma_neg"] <= 0:
        raise ConfigurationError("ms-recovery temperatures must be positive")
    keep = cfg.keep_zero_loss if keep_zero_loss is None else keep_zero_loss
    idx = _candidates(losses, keep)
    slack_loss = (cfg.lam + cfg.m - r["c_pos"], r["c_neg"] + cfg.m - cfg.lam)
    w, slack, value = _group_softmax(losses.loss, pairs, idx, r["gamma_pos"], r["gamma_neg"],
                                     slack_loss=slack_loss)
    return WeightAssignment(w, "per-anchor", value, slack=slack)


def solve(losses: PairLossMatrix, pairs: PairSystem, cfg: DroConfig) -> WeightAssignment:
    """Dispatch on ``cfg.variant``."""
    keep = cfg.keep_zero_loss
    v = cfg.variant
    if v == "avg":
        return solve_avg(losses)
    if v == "max":
        return solve_max(losses, keep)
    if v == "topk":
        return solve_topk(losses, cfg.K, keep)
    if v == "topk-pn":
        return solve_topk_pn(losses, pairs, cfg.K, keep)
    if v == "kl":
        return solve_kl(losses, cfg.gamma, keep)
    if v == "chi2":
        return solve_chi2(losses, cfg.rho, keep)
    if v == "kl-grouped":
        r = cfg.resolved()
        return solve_kl_grouped(losses, pairs, r["gamma_pos"], r["gamma_neg"], keep)
    if v == "ms-recovery":
        return solve_ms_recovery(losses, pairs, cfg)
    raise ConfigurationError(f"unknown variant {v!r}")


def sample_pairs(w: WeightAssignment, count: int, rng_seed: int, pairs: PairSystem | None = None):
    """Draw ``count`` pair indices with replacement according to ``w``.

    Per-anchor weights need ``pairs``: the draw is split evenly over the
    groups with positive mass (remainder to the first groups) and made
    proportionally inside each group.
    """
    if count < 1:
        raise ConfigurationError("count must be at least 1")
    rng = np.random.default_rng(rng_seed)
    weights = w.weights
    if w.flavor == "global-simplex":
        total = weights.sum()
        if total <= 0:
            raise EmptyActiveSetError("all weights are zero")
        return rng.choice(weights.size, size=count, replace=True, p=weights / total)
    if w.flavor != "per-anchor":
        raise ConfigurationError("sampling needs global-simplex or per-anchor weights")
    if pairs is None:
        raise ConfigurationError("per-anchor sampling needs the pair system")
    groups = [g for i in range(pairs.batch_size)
              for g in (pairs.pos_groups[i], pairs.neg_groups[i]) if weights[g].sum() > 0]
    if not groups:
        raise EmptyActiveSetError("all weights are zero")
    share, extra = divmod(count, len(groups))
    out = []
    for k, g in enumerate(groups):
        c = share + (k < extra)
        if c:
            pg = weights[g]
            out.append(rng.choice(g, size=c, replace=True, p=pg / pg.sum()))
    return np.concatenate(out)


def weighted_subgradient_coeffs(w: WeightAssignment, losses: PairLossMatrix):
    """Per-pair coefficient of dS_ij/dtheta in the gradient of sum p_ij l_ij."""
    p = w.weights
    if w.flavor == "binary-selection":
        n_sel = np.count_nonzero(p)
        p = p / n_sel if n_sel else p
    return p * losses.dloss_dS
