import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dropairs.oracle import (
    OracleFailureError,
    chi2_oracle,
    finite_diff_grad,
    project_simplex,
    simplex_ascent,
    topk_oracle,
)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=20))
def test_projection_lands_on_simplex(v):
    p = project_simplex(np.array(v))
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12


def test_projection_fixes_simplex_points():
    p = np.array([0.2, 0.3, 0.5])
    assert np.allclose(project_simplex(p), p)


def test_ascent_linear():
    w, value = simplex_ascent([0.9, 0.5])
    assert np.allclose(w, [1, 0], atol=1e-8)
    assert value == pytest.approx(0.9, abs=1e-8)


def test_ascent_kl_example():
    _, value = simplex_ascent([1.0, 0.0], "kl", 1.0)
    assert value == pytest.approx(math.log((math.e + 1) / 2), abs=1e-10)
    # exhaustive 1e-4 grid over the 2-simplex
    t = np.linspace(0, 1, 10001)[1:-1]
    obj = t - (t * np.log(2 * t) + (1 - t) * np.log(2 * (1 - t)))
    assert value == pytest.approx(obj.max(), abs=1e-7)


def test_ascent_singleton():
    w, value = simplex_ascent([0.3])
    assert w.tolist() == [1.0] and value == 0.3


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=12), st.floats(0.05, 2))
def test_ascent_output_on_simplex(v, gamma):
    w, _ = simplex_ascent(v, "kl", gamma)
    assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-10


def test_ascent_rejects_empty():
    with pytest.raises(ValueError):
        simplex_ascent([])


def test_ascent_detects_divergence():
    with pytest.raises(OracleFailureError):
        simplex_ascent([np.inf, 0.0])


def test_topk_oracle():
    assert topk_oracle([0.9, 0.5, 0.1, 0.3], 2) == pytest.approx(0.7)
    assert topk_oracle([0.1, 0.2], 5) == pytest.approx(0.15)


def test_chi2_oracle_examples():
    assert chi2_oracle([0.0, 1.0], 0.25) == pytest.approx(0.75, abs=1e-4)
    assert chi2_oracle([0.4, 0.4, 0.4], 1.0) == pytest.approx(0.4)


def test_chi2_oracle_vertex_reached():
    # the ball ||p - u|| <= sqrt(2 rho)/n reaches a vertex once rho >= n(n-1)/2
    v = np.array([0.2, 0.7, 0.1, 0.4])
    assert chi2_oracle(v, 4 * 3 / 2) == pytest.approx(0.7, abs=1e-6)
    assert chi2_oracle(v, 3.0) < 0.7


def test_finite_diff_quadratic_and_constant():
    theta = np.array([0.3, -1.2, 2.0])
    g = finite_diff_grad(lambda t: 0.5 * float(t @ t), theta, 1e-5)
    assert np.abs(g - theta).max() <= 1e-8
    assert np.all(finite_diff_grad(lambda t: 4.0, theta) == 0)
