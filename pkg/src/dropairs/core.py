"""Shared domain types: batches, pair systems, loss tables and weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DroPairsError(Exception):
    """Base class for all library errors."""


class InvalidBatchError(DroPairsError, ValueError):
    pass


class NormalizationError(DroPairsError, ValueError):
    pass


class ConfigurationError(DroPairsError, ValueError):
    pass


class EmptyInputError(DroPairsError, ValueError):
    pass


class EmptyActiveSetError(DroPairsError, ValueError):
    pass


class ShapeError(DroPairsError, ValueError):
    pass


class DroPairsWarning(UserWarning):
    """Emitted when an operation silently adapts its input (e.g. K capped)."""


NORM_TOL = 1e-6

VARIANTS = ("avg", "max", "topk", "topk-pn", "kl", "chi2", "kl-grouped", "ms-recovery")
FLAVORS = ("global-simplex", "per-anchor", "binary-selection")


def l2_normalize(x, eps=1e-12):
    """Row-normalize ``x``; all-zero rows are nudged by ``eps`` first."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    if zero.any():
        x = x.copy()
        x[zero] += eps
        norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / norms


@dataclass(frozen=True)
class EmbeddingBatch:
    """One mini-batch: raw inputs, embeddings and integer class labels.

    The constructor only validates shapes; use :meth:`create` to get
    unit-norm embeddings.
    """

    inputs: np.ndarray
    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        emb = np.atleast_2d(np.asarray(self.embeddings, dtype=np.float64))
        labels = np.asarray(self.labels)
        if emb.ndim != 2 or emb.shape[1] < 1:
            raise InvalidBatchError(f"embeddings must be B x d with d >= 1, got {emb.shape}")
        b = emb.shape[0]
        if b < 2:
            raise InvalidBatchError(f"a batch needs at least 2 examples, got {b}")
        if inputs.shape[0] != b or labels.shape != (b,):
            raise InvalidBatchError("inputs, embeddings and labels disagree on batch size")
        if labels.size and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0):
            raise InvalidBatchError("labels must be non-negative integers")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @classmethod
    def create(cls, inputs, embeddings, labels, normalize=True):
        emb = l2_normalize(embeddings) if normalize else embeddings
        return cls(inputs, emb, np.asarray(labels, dtype=np.int64))

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]


@dataclass(frozen=True)
class PairSystem:
    """Ordered pairs (anchor, other) with +1/-1 labels, enumerated row-major.

    ``pos_groups[i]`` / ``neg_groups[i]`` hold *pair indices* (positions in
    ``anchor``/``other``) of the positive / negative pairs headed by anchor i.
    """

    anchor: np.ndarray
    other: np.ndarray
    y: np.ndarray
    pos_groups: tuple
    neg_groups: tuple
    batch_size: int
    include_self: bool = False

    def __len__(self):
        return self.anchor.size

    @property
    def n_pos(self) -> int:
        return int(np.count_nonzero(self.y > 0))

    @property
    def n_neg(self) -> int:
        return int(np.count_nonzero(self.y < 0))

    @property
    def is_pos(self) -> np.ndarray:
        return self.y > 0

    def group_ids(self) -> np.ndarray:
        """Normalization group per pair: ``2*anchor`` (pos) or ``2*anchor+1`` (neg)."""
        return 2 * self.anchor + (self.y < 0)

    def to_matrix(self, values, fill=0.0) -> np.ndarray:
        """Scatter a per-pair vector into a B x B matrix."""
        out = np.full((self.batch_size, self.batch_size), fill, dtype=np.float64)
        out[self.anchor, self.other] = values
        return out

    def gather(self, matrix) -> np.ndarray:
        return np.asarray(matrix)[self.anchor, self.other]

    def pairs(self):
        return list(zip(self.anchor.tolist(), self.other.tolist()))


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PairLossMatrix:
    """Per-pair loss, d(loss)/dS and the positive-loss mask."""

    loss: np.ndarray
    dloss_dS: np.ndarray
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        loss = np.asarray(self.loss, dtype=np.float64)
        if np.any(loss < 0):
            raise ValueError("pair losses must be non-negative")
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "dloss_dS", np.asarray(self.dloss_dS, dtype=np.float64))
        object.__setattr__(self, "active", loss > 0)

    def __len__(self):
        return self.loss.size

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))


@dataclass(frozen=True)
class WeightAssignment:
    """Pair weights ``p`` and the robust loss they attain.

    ``slack`` is only used by the MS-style formulation, where every group
    carries an extra zero-loss element; there the per-group weights plus
    the slack sum to one.
    """

    weights: np.ndarray
    flavor: str
    robust_value: float
    slack: np.ndarray | None = None

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ConfigurationError(f"unknown weight flavor {self.flavor!r}")
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "robust_value", float(self.robust_value))

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def check(self, pairs: PairSystem | None = None, tol=1e-9):
        """Assert the flavor's normalization invariant; returns self."""
        w = self.weights
        if np.any(w < 0):
            raise AssertionError("negative weight")
        if self.flavor == "global-simplex":
            if abs(w.sum() - 1.0) > tol:
                raise AssertionError(f"weights sum to {w.sum()!r}")
        elif self.flavor == "binary-selection":
            if not np.all((w == 0) | (w == 1)):
                raise AssertionError("binary weights must be 0 or 1")
        elif pairs is not None:
            slack = self.slack if self.slack is not None else np.zeros(2 * pairs.batch_size)
            for i in range(pairs.batch_size):
                for g, idx in ((2 * i, pairs.pos_groups[i]), (2 * i + 1, pairs.neg_groups[i])):
                    total = w[idx].sum() + slack[g]
                    if total > 0 and abs(total - 1.0) > tol:
                        raise AssertionError(f"group {g} sums to {total!r}")
        return self


@dataclass(frozen=True)
class DroConfig:
    """Uncertainty-set choice plus every hyperparameter the solvers read.

    ``lam`` is the similarity threshold (lambda). Unset group temperatures and
    slack offsets are resolved per variant by :meth:`resolved`.
    """

    variant: str = "topk"
    K: int = 2
    gamma: float = 0.1
    gamma_pos: float | None = None
    gamma_neg: float | None = None
    rho: float = 0.25
    m: float = 0.2
    lam: float = 0.5
    alpha: float = 2.0
    beta: float = 50.0
    c_pos: float | None = None
    c_neg: float | None = None
    cost_neg: float = 1.0
    keep_zero_loss: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.variant in ("topk", "topk-pn") and self.K < 1:
            raise ConfigurationError("K must be positive")
        if self.variant == "topk-pn" and (self.K < 2 or self.K % 2):
            raise ConfigurationError("topk-pn needs an even K >= 2")
        for name in ("gamma", "rho", "alpha", "beta"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("gamma_pos", "gamma_neg"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigurationError(f"{name} must be positive")

    def resolved(self) -> dict:
        """Group temperatures and slack offsets with the variant's defaults.

        ms-recovery ties: c+ = lam + m, c- = lam - m, gamma+ = 1/alpha,
        gamma- = 1/beta. Every other variant uses ``gamma`` for both groups.
        """
        if self.variant == "ms-recovery":
            gp = 1.0 / self.alpha if self.gamma_pos is None else self.gamma_pos
            gn = 1.0 / self.beta if self.gamma_neg is None else self.gamma_neg
        else:
            gp = self.gamma if self.gamma_pos is None else self.gamma_pos
            gn = self.gamma if self.gamma_neg is None else self.gamma_neg
        cp = self.lam + self.m if self.c_pos is None else self.c_pos
        cn = self.lam - self.m if self.c_neg is None else self.c_neg
        return {"gamma_pos": gp, "gamma_neg": gn, "c_pos": cp, "c_neg": cn}


def build_pair_system(labels, include_self=False) -> PairSystem:
    """Enumerate ordered pairs row-major and split them per anchor by sign."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size < 2:
        raise InvalidBatchError(f"need at least 2 examples to form pairs, got {labels.size}")
    b = labels.size
    mask = np.ones((b, b), dtype=bool)
    if not include_self:
        np.fill_diagonal(mask, False)
    anchor, other = np.nonzero(mask)
    y = np.where(labels[anchor] == labels[other], 1, -1).astype(np.int8)

    # pairs are contiguous per anchor, so the groups are slices of one argsort
    starts = np.searchsorted(anchor, np.arange(b + 1))
    pos_groups, neg_groups = [], []
    for i in range(b):
        idx = np.arange(starts[i], starts[i + 1])
        yi = y[starts[i]:starts[i + 1]]
        pos_groups.append(idx[yi > 0])
        neg_groups.append(idx[yi < 0])
    return PairSystem(anchor, other, y, tuple(pos_groups), tuple(neg_groups), b, include_self)


def similarity(batch: EmbeddingBatch) -> SimilarityMatrix:
    """Gram matrix of unit-norm embeddings, exactly symmetric."""
    f = batch.embeddings
    norms = np.linalg.norm(f, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
    if bad.size:
        raise NormalizationError(f"rows {bad.tolist()} are not unit norm (norms {norms[bad]})")
    s = f @ f.T
    upper = np.triu(s)
    s = upper + np.triu(s, 1).T
    np.clip(s, -1.0, 1.0, out=s)
    return SimilarityMatrix(s)
