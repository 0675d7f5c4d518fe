import math

import numpy as np
import pytest

from dropairs.core import DroConfig, SimilarityMatrix, build_pair_system
from dropairs.losses import binomial_loss, loss_matrix, margin_loss, softplus


@pytest.mark.parametrize("s,y,loss,grad", [
    (0.9, 1, 0.0, 0.0),
    (0.3, 1, 0.4, -1.0),
    (0.7, -1, 0.4, 1.0),
])
def test_margin_examples(s, y, loss, grad):
    l, g = margin_loss(s, y, 0.2, 0.5)
    assert l == pytest.approx(loss, abs=1e-15)
    assert g == grad


def test_binomial_at_threshold():
    l, _ = binomial_loss(0.5, 1, alpha=2.0, lam=0.5)
    assert l == pytest.approx(math.log(2) / 2)


def test_binomial_limit_and_negative_example():
    assert binomial_loss(1e6, 1)[0] == 0.0
    l, _ = binomial_loss(0.7, -1, beta=50, lam=0.5, cost_neg=1)
    assert l == pytest.approx(math.log1p(math.exp(10)) / 50, rel=1e-14)
    assert l == pytest.approx(0.20000091, abs=1e-8)


def test_softplus_stable():
    x = np.array([-800.0, 0.0, 800.0])
    out = softplus(x)
    assert np.all(np.isfinite(out))
    assert out[1] == pytest.approx(math.log(2))
    assert out[2] == 800.0


def test_binomial_gradient_matches_fd():
    h = 1e-6
    for y in (1, -1):
        for s in (-0.3, 0.2, 0.6):
            _, g = binomial_loss(s, y)
            fd = (binomial_loss(s + h, y)[0] - binomial_loss(s - h, y)[0]) / (2 * h)
            assert g == pytest.approx(fd, rel=1e-6)


def test_loss_matrix_mixed_batch():
    # anchor 0: positive at S=0.3 (loss 0.4), negative at S=0.7 (loss 0.4);
    # the other pairs sit at hinge-inactive similarities
    labels = [0, 0, 1]
    s = np.array([[1.0, 0.3, 0.7],
                  [0.3, 1.0, 0.0],
                  [0.7, 0.0, 1.0]])
    pairs = build_pair_system(labels)
    lm = loss_matrix(SimilarityMatrix(s), pairs, DroConfig())
    act = [pr for pr, a in zip(pairs.pairs(), lm.active) if a]
    assert act == [(0, 1), (0, 2), (1, 0), (2, 0)]
    assert np.allclose(lm.loss[lm.active], 0.4)


def test_loss_matrix_all_inactive():
    s = np.array([[1.0, 0.9, 0.0], [0.9, 1.0, 0.1], [0.0, 0.1, 1.0]])
    lm = loss_matrix(SimilarityMatrix(s), build_pair_system([0, 0, 1]), DroConfig())
    assert lm.n_active == 0


def test_binomial_all_active():
    s = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, -0.9], [-0.9, -0.9, 1.0]])
    lm = loss_matrix(SimilarityMatrix(s), build_pair_system([0, 0, 1]), DroConfig(), "binomial")
    assert lm.n_active == len(lm)
