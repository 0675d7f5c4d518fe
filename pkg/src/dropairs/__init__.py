"""Distributionally robust pair weighting for deep metric learning."""

from .core import (
    ConfigurationError,
    DroConfig,
    DroPairsError,
    EmbeddingBatch,
    PairLossMatrix,
    PairSystem,
    SimilarityMatrix,
    WeightAssignment,
    build_pair_system,
    similarity,
)
from .data import Dataset, gen_synthetic, load_dataset
from .dro import solve
from .evaluation import imbalance_sweep, pair_ratio, recall_at_k
from .losses import loss_matrix
from .model import EmbeddingModel, TrainConfig, train

__version__ = "0.1.0"
