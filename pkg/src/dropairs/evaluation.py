"""Retrieval metrics and the batch-size (pair imbalance) sweep."""

from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigurationError, DroPairsError, PairSystem, l2_normalize


class UndefinedRatioError(DroPairsError, ValueError):
    pass


def recall_at_k(embeddings, labels, ks=(1,)):
    """Fraction of queries with a same-class item among their k most similar others.

    Embeddings are L2-normalized first; the query itself is excluded and
    ties are broken by the lower index.
    """
    f = l2_normalize(embeddings)
    labels = np.asarray(labels)
    n = labels.size
    if n < 2:
        raise ConfigurationError("recall needs at least two examples")
    ks = [int(k) for k in ks]
    for k in ks:
        if k < 1 or k >= n:
            raise ConfigurationError(f"k={k} must lie in [1, {n - 1}]")
    s = f @ f.T
    np.fill_diagonal(s, -np.inf)
    order = np.argsort(-s, axis=1, kind="stable")
    hits = labels[order] == labels[:, None]
    first_hit = np.where(hits.any(axis=1), hits.argmax(axis=1), n)
    return {k: float(np.mean(first_hit < k)) for k in ks}


def pair_ratio(pairs: PairSystem) -> float:
    """Positive-to-negative pair ratio P/N of a pair system."""
    if pairs.n_neg == 0:
        raise UndefinedRatioError("no negative pairs; P/N is undefined")
    return pairs.n_pos / pairs.n_neg


def balanced_pair_ratio(batch_size, per_class):
    """P/N for ordered, non-self pairs of a batch with ``per_class`` instances per class."""
    if batch_size <= per_class:
        raise UndefinedRatioError("single-class batch has no negative pairs")
    return (per_class - 1) / (batch_size - per_class)


SWEEP_METHODS = ("avg", "semihard", "dws", "topk", "topk-pn", "kl")


@dataclass(frozen=True)
class SweepRow:
    batch_size: int
    ratio: float
    method: str
    recall1: float


def method_config(base_cfg, method, batch_size):
    """TrainConfig for one sweep cell; K = 2B for the top-K variants."""
    m = base_cfg.instances_per_class
    cpb = max(1, batch_size // m)
    if method in ("semihard", "dws"):
        dro_cfg = replace(base_cfg.dro, variant="avg")
        miner = method
    else:
        k = 2 * batch_size
        dro_cfg = replace(base_cfg.dro, variant=method, K=k if k % 2 == 0 else k + 1)
        miner = None
    return replace(base_cfg, classes_per_batch=cpb, dro=dro_cfg, miner=miner)


def imbalance_sweep(dataset, base_cfg, batch_sizes, methods=SWEEP_METHODS):
    """Train every method at every batch size; report held-out recall@1.

    ``ratio`` is the P/N ratio of the batches actually drawn, which can
    differ from the nominal batch size when the dataset has fewer classes.
    """
    from .core import build_pair_system
    from .model import sample_batch, split_holdout, train

    rows = []
    for b in batch_sizes:
        for method in methods:
            cfg = method_config(base_cfg, method, b)
            train_ds, _ = split_holdout(dataset, cfg)
            idx = sample_batch(train_ds, cfg, 0)
            ratio = pair_ratio(build_pair_system(train_ds.labels[idx], cfg.include_self))
            _, history = train(dataset, cfg)
            rows.append(SweepRow(int(b), ratio, method, history[-1].recall1))
    return rows
