"""Pairwise base losses as functions of the pair similarity."""

import numpy as np

from .core import ConfigurationError, DroConfig, PairLossMatrix, PairSystem, SimilarityMatrix

LOSS_KINDS = ("margin", "binomial")


def softplus(x):
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    big = x > 30.0
    out = np.empty_like(x)
    out[big] = x[big] + np.log1p(np.exp(-x[big]))
    out[~big] = np.log1p(np.exp(x[~big]))
    return out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def margin_loss(S, y, m=0.2, lam=0.5):
    """Hinge ``[m + y (lam - S)]_+`` and its derivative in S.

    The derivative is ``-y`` where the hinge is active and 0 elsewhere,
    including the kink itself. Scalars in, scalars out.
    """
    S = np.asarray(S, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = m + y * (lam - S)
    loss = np.maximum(z, 0.0)
    grad = np.where(z > 0, -y, 0.0)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def binomial_loss(S, y, alpha=2.0, beta=50.0, lam=0.5, cost_neg=1.0):
    """Binomial deviance with separate slopes for positives and negatives.

    positive: (1/alpha) * softplus(-alpha (S - lam))
    negative: cost_neg * (1/beta) * softplus(beta (S - lam))
    """
    S = np.asarray(S, dtype=np.float64)
    y = np.asarray(y)
    pos = y > 0
    zp = -alpha * (S - lam)
    zn = beta * (S - lam)
    loss = np.where(pos, softplus(zp) / alpha, cost_neg * softplus(zn) / beta)
    grad = np.where(pos, -sigmoid(zp), cost_neg * sigmoid(zn))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def loss_matrix(sim: SimilarityMatrix, pairs: PairSystem, cfg: DroConfig, loss_kind="margin"):
    """Evaluate the base loss on every pair; zero-loss pairs end up inactive."""
    if sim.size != pairs.batch_size:
        raise ConfigurationError(
            f"similarity is {sim.size}x{sim.size} but pairs were built for B={pairs.batch_size}")
    s = pairs.gather(sim.values)
    if loss_kind == "margin":
        loss, grad = margin_loss(s, pairs.y, cfg.m, cfg.lam)
    elif loss_kind == "binomial":
        loss, grad = binomial_loss(s, pairs.y, cfg.alpha, cfg.beta, cfg.lam, cfg.cost_neg)
    else:
        raise ConfigurationError(f"unknown loss kind {loss_kind!r}; choose from {LOSS_KINDS}")
    return PairLossMatrix(np.atleast_1d(loss), np.atleast_1d(grad))
