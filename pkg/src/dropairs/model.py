"""A small embedding network trained by plain SGD on DRO-weighted pair losses."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dro, mining
from .core import (
    ConfigurationError,
    DroConfig,
    DroPairsError,
    DroPairsWarning,
    EmbeddingBatch,
    EmptyActiveSetError,
    ShapeError,
    WeightAssignment,
    build_pair_system,
    similarity,
)
from .data import Dataset
from .evaluation import recall_at_k
from .losses import loss_matrix


class TrainingError(DroPairsError, FloatingPointError):
    pass


@dataclass(frozen=True)
class EmbeddingModel:
    """``x -> normalize(W1 x)`` or ``x -> normalize(W2 relu(W1 x))``."""

    weights_1: np.ndarray
    weights_2: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return "linear" if self.weights_2 is None else "one-hidden"

    @property
    def in_dim(self) -> int:
        return self.weights_1.shape[1]

    @property
    def out_dim(self) -> int:
        return (self.weights_1 if self.weights_2 is None else self.weights_2).shape[0]

    @classmethod
    def init(cls, in_dim, out_dim, hidden=0, seed=0):
        """Fan-in uniform init U[-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
        rng = np.random.default_rng(seed)
        if hidden:
            w1 = rng.uniform(-1, 1, (hidden, in_dim)) / math.sqrt(in_dim)
            w2 = rng.uniform(-1, 1, (out_dim, hidden)) / math.sqrt(hidden)
            return cls(w1, w2)
        return cls(rng.uniform(-1, 1, (out_dim, in_dim)) / math.sqrt(in_dim))

    def params(self) -> np.ndarray:
        if self.weights_2 is None:
            return self.weights_1.ravel().copy()
        return np.concatenate([self.weights_1.ravel(), self.weights_2.ravel()])

    def with_params(self, theta) -> EmbeddingModel:
        theta = np.asarray(theta, dtype=np.float64)
        n1 = self.weights_1.size
        w1 = theta[:n1].reshape(self.weights_1.shape)
        if self.weights_2 is None:
            return EmbeddingModel(w1)
        return EmbeddingModel(w1, theta[n1:].reshape(self.weights_2.shape))


def dump_model(model: EmbeddingModel) -> str:
    """Header line with the layer shapes, then one parameter per line."""
    if model.weights_2 is None:
        head = f"linear {model.in_dim} {model.out_dim}"
    else:
        head = f"one-hidden {model.in_dim} {model.weights_1.shape[0]} {model.out_dim}"
    return head + "\n" + "".join(f"{v!r}\n" for v in model.params().tolist())


def parse_model(text: str) -> EmbeddingModel:
    lines = text.split()
    if not lines or lines[0] not in ("linear", "one-hidden"):
        raise ValueError("model text must start with 'linear' or 'one-hidden'")
    n_dims = 2 if lines[0] == "linear" else 3
    dims = [int(v) for v in lines[1:1 + n_dims]]
    theta = np.array([float(v) for v in lines[1 + n_dims:]])
    if lines[0] == "linear":
        shell = EmbeddingModel(np.zeros((dims[1], dims[0])))
    else:
        shell = EmbeddingModel(np.zeros((dims[1], dims[0])), np.zeros((dims[2], dims[1])))
    if theta.size != shell.params().size:
        raise ValueError(f"expected {shell.params().size} parameters, found {theta.size}")
    return shell.with_params(theta)


def _forward(model: EmbeddingModel, inputs):
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"model expects {model.in_dim} input features, got {x.shape[1]}")
    pre = x @ model.weights_1.T
    hidden = None
    if model.weights_2 is None:
        z = pre
    else:
        hidden = np.maximum(pre, 0.0)
        z = hidden @ model.weights_2.T
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0):
        z = np.where(norms == 0, z + 1e-12, z)
        norms = np.linalg.norm(z, axis=1, keepdims=True)
    return x, pre, hidden, z, norms


def forward(model: EmbeddingModel, inputs) -> np.ndarray:
    """Unit-norm embeddings, one row per input row."""
    _, _, _, z, norms = _forward(model, inputs)
    return z / norms


def embed(model: EmbeddingModel, inputs, labels) -> EmbeddingBatch:
    return EmbeddingBatch(inputs, forward(model, inputs), labels)


def backward(model: EmbeddingModel, inputs, pairs, coeffs) -> np.ndarray:
    """Flat gradient of ``sum_ij coeffs_ij * S_ij`` with respect to the parameters.

    ``coeffs`` is either a per-pair vector aligned with ``pairs`` or a B x B
    matrix (then ``pairs`` may be None).
    """
    x, pre, hidden, z, norms = _forward(model, inputs)
    f = z / norms
    c = np.asarray(coeffs, dtype=np.float64)
    if c.ndim == 1:
        c = pairs.to_matrix(c)
    d_f = (c + c.T) @ f
    d_z = (d_f - f * np.sum(f * d_f, axis=1, keepdims=True)) / norms
    if model.weights_2 is None:
        return (d_z.T @ x).ravel()
    d_w2 = d_z.T @ hidden
    d_pre = (d_z @ model.weights_2) * (pre > 0)
    return np.concatenate([(d_pre.T @ x).ravel(), d_w2.ravel()])


@dataclass(frozen=True)
class TrainConfig:
    """Batch construction, optimizer and weighting settings.

    ``miner`` replaces the DRO solve by a baseline selector ("semihard",
    "dws" or "ms"). ``p_sampling > 0`` averages the gradient over that many
    pairs drawn from the solved weights instead of using all weights.
    """

    classes_per_batch: int = 4
    instances_per_class: int = 5
    epochs: int = 20
    learning_rate: float = 0.05
    seed: int = 0
    dro: DroConfig = field(default_factory=DroConfig)
    loss_kind: str = "margin"
    miner: str | None = None
    embed_dim: int = 16
    hidden: int = 0
    holdout: float = 0.2
    batches_per_epoch: int | None = None
    p_sampling: int = 0
    include_self: bool = False
    dws_count: int | None = None
    dws_clip: float = 100.0
    ms_epsilon: float = 0.1

    def __post_init__(self):
        if self.instances_per_class < 2:
            raise ConfigurationError("need at least 2 instances per class so positives exist")
        if self.learning_rate < 0:
            raise ConfigurationError("learning rate must be non-negative")
        if self.classes_per_batch < 1 or self.epochs < 0:
            raise ConfigurationError("classes_per_batch must be >= 1 and epochs >= 0")
        if self.miner not in (None, "semihard", "dws", "ms"):
            raise ConfigurationError(f"unknown miner {self.miner!r}")
        if not 0 < self.holdout < 1:
            raise ConfigurationError("holdout fraction must lie in (0, 1)")

    @property
    def batch_size(self) -> int:
        return self.classes_per_batch * self.instances_per_class


def sample_batch(dataset: Dataset, cfg: TrainConfig, epoch_step: int) -> np.ndarray:
    """Indices of ``classes_per_batch`` classes with M instances each.

    Classes are drawn without replacement; instances too, unless a class
    has fewer than M members. Deterministic in ``(cfg.seed, epoch_step)``.
    """
    rng = np.random.default_rng([cfg.seed, epoch_step])
    classes = np.unique(dataset.labels)
    n_cls = cfg.classes_per_batch
    if classes.size < n_cls:
        warnings.warn(f"only {classes.size} classes available, {n_cls} requested",
                      DroPairsWarning, stacklevel=2)
        n_cls = classes.size
    picked = rng.choice(classes, size=n_cls, replace=False)
    m = cfg.instances_per_class
    out = []
    for c in picked:
        members = np.flatnonzero(dataset.labels == c)
        out.append(rng.choice(members, size=m, replace=members.size < m))
    return np.concatenate(out)


def split_holdout(dataset: Dataset, cfg: TrainConfig):
    """Seeded shuffle; the last ``holdout`` fraction is kept for evaluation."""
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    perm = rng.permutation(len(dataset))
    n_hold = max(2, int(round(cfg.holdout * len(dataset))))
    if n_hold >= len(dataset):
        raise ConfigurationError("dataset too small for a held-out split")
    return dataset.subset(np.sort(perm[n_hold:])), dataset.subset(np.sort(perm[:n_hold]))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    robust_loss: float
    recall1: float


def _weights(losses, pairs, sim, cfg: TrainConfig, step_seed) -> WeightAssignment:
    if cfg.miner == "semihard":
        return mining.semihard_select(sim, pairs, cfg.dro.lam, cfg.dro.m)
    if cfg.miner == "dws":
        count = cfg.dws_count or 2 * (cfg.instances_per_class - 1)
        return mining.dws_select(sim, pairs, cfg.embed_dim, count, cfg.dws_clip, step_seed, losses)
    if cfg.miner == "ms":
        return mining.ms_mining_select(sim, pairs, cfg.ms_epsilon, losses)
    return dro.solve(losses, pairs, cfg.dro)


def train_step(model: EmbeddingModel, x, labels, cfg: TrainConfig, step_seed=0):
    """One SGD step. Returns ``(new_model, robust_value, gradient)``."""
    batch = embed(model, x, labels)
    pairs = build_pair_system(labels, cfg.include_self)
    sim = similarity(batch)
    losses = loss_matrix(sim, pairs, cfg.dro, cfg.loss_kind)
    try:
        w = _weights(losses, pairs, sim, cfg, step_seed)
    except EmptyActiveSetError:
        return model, 0.0, np.zeros(model.params().size)
    if cfg.p_sampling and w.flavor != "binary-selection":
        drawn = dro.sample_pairs(w, cfg.p_sampling, step_seed, pairs)
        freq = np.bincount(drawn, minlength=len(pairs)) / drawn.size
        coeffs = freq * losses.dloss_dS
    else:
        coeffs = dro.weighted_subgradient_coeffs(w, losses)
    grad = backward(model, x, pairs, coeffs)
    if not (math.isfinite(w.robust_value) and np.all(np.isfinite(grad))):
        bad = np.flatnonzero(~np.isfinite(losses.loss) | ~np.isfinite(coeffs))
        where = pairs.pairs()[bad[0]] if bad.size else None
        raise TrainingError(f"non-finite loss or gradient (offending pair {where})")
    new = model.with_params(model.params() - cfg.learning_rate * grad)
    return new, w.robust_value, grad


def train(dataset: Dataset, cfg: TrainConfig, model: EmbeddingModel | None = None):
    """SGD over class-balanced batches; returns the model and per-epoch records.

    Each record holds the mean robust loss of the epoch's batches and
    recall@1 on the held-out split.
    """
    train_ds, hold_ds = split_holdout(dataset, cfg)
    if model is None:
        model = EmbeddingModel.init(dataset.dim, cfg.embed_dim, cfg.hidden, seed=cfg.seed)
    steps = cfg.batches_per_epoch or max(1, len(train_ds) // cfg.batch_size)
    history = []
    step = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DroPairsWarning)
        for epoch in range(1, cfg.epochs + 1):
            values = []
            for _ in range(steps):
                idx = sample_batch(train_ds, cfg, step)
                try:
                    model, value, _ = train_step(model, train_ds.features[idx],
                                                 train_ds.labels[idx], cfg, step_seed=step)
                except TrainingError as exc:
                    raise TrainingError(f"epoch {epoch}, batch {step}: {exc}") from None
                values.append(value)
                step += 1
            r1 = recall_at_k(forward(model, hold_ds.features), hold_ds.labels, [1])[1]
            history.append(EpochRecord(epoch, math.fsum(values) / len(values), r1))
    return model, history
