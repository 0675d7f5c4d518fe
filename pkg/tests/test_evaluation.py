import numpy as np
import pytest

from dropairs.core import ConfigurationError, build_pair_system
from dropairs.data import gen_synthetic
from dropairs.evaluation import (
    UndefinedRatioError,
    balanced_pair_ratio,
    imbalance_sweep,
    method_config,
    pair_ratio,
    recall_at_k,
)
from dropairs.model import TrainConfig


def test_recall_tight_clusters():
    f = np.array([[1.0, 0.0], [0.99, 0.01], [0.0, 1.0], [0.01, 0.99]])
    assert recall_at_k(f, [0, 0, 1, 1], [1])[1] == 1.0


def test_recall_distinct_labels():
    f = np.random.default_rng(0).standard_normal((5, 3))
    assert recall_at_k(f, [0, 1, 2, 3, 4], [1, 4]) == {1: 0.0, 4: 0.0}


def test_recall_monotone_in_k():
    ds = gen_synthetic(4, 10, 5, 0.8, seed=0)
    r = recall_at_k(ds.features, ds.labels, [1, 2, 4, 8])
    assert r[1] <= r[2] <= r[4] <= r[8]


def test_recall_rejects_bad_k():
    with pytest.raises(ConfigurationError):
        recall_at_k(np.eye(3), [0, 1, 2], [3])


def test_ratio_reference_values():
    labels80 = np.repeat(np.arange(16), 5)
    assert round(pair_ratio(build_pair_system(labels80)), 3) == 0.053
    assert build_pair_system(labels80).n_pos == 320
    labels160 = np.repeat(np.arange(32), 5)
    assert round(pair_ratio(build_pair_system(labels160)), 3) == 0.026
    assert balanced_pair_ratio(80, 5) == pytest.approx(4 / 75)


def test_ratio_single_class():
    with pytest.raises(UndefinedRatioError):
        pair_ratio(build_pair_system([0, 0, 0]))
    with pytest.raises(UndefinedRatioError):
        balanced_pair_ratio(5, 5)


def test_method_config():
    base = TrainConfig()
    cfg = method_config(base, "topk-pn", 40)
    assert cfg.classes_per_batch == 8 and cfg.dro.K == 80 and cfg.miner is None
    cfg = method_config(base, "dws", 20)
    assert cfg.miner == "dws" and cfg.dro.variant == "avg"


def test_sweep_separable_all_perfect():
    ds = gen_synthetic(4, 20, 8, 0.02, seed=0)
    base = TrainConfig(epochs=3)
    rows = imbalance_sweep(ds, base, [10])
    assert len(rows) == 6
    assert {r.method for r in rows} == {"avg", "semihard", "dws", "topk", "topk-pn", "kl"}
    assert all(r.recall1 == 1.0 for r in rows)
    assert all(r.batch_size == 10 for r in rows)
