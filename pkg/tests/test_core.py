import numpy as np
import pytest

from dropairs.core import (
    DroConfig,
    ConfigurationError,
    EmbeddingBatch,
    InvalidBatchError,
    NormalizationError,
    PairLossMatrix,
    WeightAssignment,
    build_pair_system,
    l2_normalize,
    similarity,
)


def batch(rows, labels):
    return EmbeddingBatch.create(np.zeros((len(labels), 1)), np.array(rows, float), labels)


def test_pairs_without_self():
    p = build_pair_system([0, 0, 1])
    assert len(p) == 6
    assert p.pairs() == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
    pos = {pr for pr, y in zip(p.pairs(), p.y) if y > 0}
    assert pos == {(0, 1), (1, 0)}
    assert p.n_neg == 4


def test_pairs_with_self():
    p = build_pair_system([0, 0, 1], include_self=True)
    assert len(p) == 9
    self_pairs = p.anchor == p.other
    assert self_pairs.sum() == 3
    assert np.all(p.y[self_pairs] == 1)


def test_no_positive_pairs():
    p = build_pair_system([0, 1])
    assert (p.n_pos, p.n_neg) == (0, 2)


def test_groups_partition_pairs():
    p = build_pair_system([0, 1, 0, 2, 1, 1])
    idx = np.sort(np.concatenate(list(p.pos_groups) + list(p.neg_groups)))
    assert np.array_equal(idx, np.arange(len(p)))
    for i, g in enumerate(p.pos_groups):
        assert np.all(p.anchor[g] == i) and np.all(p.y[g] == 1)
    ids = p.group_ids()
    assert np.all(ids[p.y > 0] % 2 == 0)


def test_pair_system_rejects_bad_labels():
    with pytest.raises(InvalidBatchError):
        build_pair_system([])
    with pytest.raises(InvalidBatchError):
        build_pair_system([3])


def test_to_matrix_gather_roundtrip():
    p = build_pair_system([0, 1, 1, 0])
    v = np.arange(len(p), dtype=float)
    assert np.array_equal(p.gather(p.to_matrix(v)), v)


def test_similarity_examples():
    s = similarity(batch([[1, 0], [1, 0], [0, 1], [0.6, 0.8]], [0, 0, 1, 1])).values
    assert s[0, 1] == 1.0
    assert s[0, 2] == 0.0
    assert s[0, 3] == pytest.approx(0.6, abs=1e-15)
    assert np.array_equal(s, s.T)


def test_similarity_symmetric_and_bounded():
    rng = np.random.default_rng(3)
    s = similarity(batch(rng.standard_normal((12, 5)), rng.integers(0, 3, 12))).values
    assert np.array_equal(s, s.T)
    assert s.max() <= 1.0 and s.min() >= -1.0


def test_similarity_requires_unit_rows():
    raw = EmbeddingBatch.create(np.zeros((2, 1)), np.array([[2.0, 0], [0, 1]]), [0, 1], normalize=False)
    with pytest.raises(NormalizationError):
        similarity(raw)


def test_l2_normalize_rows():
    x = np.random.default_rng(0).standard_normal((7, 3))
    assert np.allclose(np.linalg.norm(l2_normalize(x), axis=1), 1.0, atol=1e-9)


def test_batch_rejects_label_mismatch():
    with pytest.raises(Exception):
        EmbeddingBatch.create(np.zeros((3, 1)), np.ones((3, 2)), [0, 1])


def test_loss_matrix_rejects_negative():
    with pytest.raises(ValueError):
        PairLossMatrix(np.array([0.1, -0.2]), np.zeros(2))


def test_weight_check_flavors():
    WeightAssignment(np.array([0.25, 0.75]), "global-simplex", 0.0).check()
    with pytest.raises(AssertionError):
        WeightAssignment(np.array([0.2, 0.7]), "global-simplex", 0.0).check()
    with pytest.raises(AssertionError):
        WeightAssignment(np.array([0.5, 1.0]), "binary-selection", 0.0).check()


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DroConfig(variant="nope")
    with pytest.raises(ConfigurationError):
        DroConfig(variant="topk-pn", K=3)
    with pytest.raises(ConfigurationError):
        DroConfig(gamma=0)
    r = DroConfig(variant="ms-recovery", alpha=2, beta=50, lam=0.5, m=0.2).resolved()
    assert r["gamma_pos"] == 0.5 and r["gamma_neg"] == 0.02
    assert r["c_pos"] == pytest.approx(0.7) and r["c_neg"] == pytest.approx(0.3)
