import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gasser.errors import PreconditionError
from gasser.graph import Graph, sbm_generate
from gasser.theory import (check_remark1, check_theorem1, check_theorem2, homophily_quadratic_residual,
                           theorem2_hypothesis, theorem3_identity)

from conftest import random_graph


def two_cliques(k):
    edges = [(i, j) for b in (0, k) for i in range(b, b + k) for j in range(i + 1, b + k)]
    return Graph.from_edges(2 * k, edges)


def test_theorem1_two_cliques():
    g = two_cliques(4)
    y = np.repeat([0, 1], 4)
    y_hat = np.tile([0, 1], 4)
    w = check_theorem1(g, y, y_hat)
    assert w.satisfied and w.M is not None


def test_theorem1_equal_labellings_rejected():
    g = two_cliques(4)
    y = np.repeat([0, 1], 4)
    with pytest.raises(PreconditionError):
        check_theorem1(g, y, y)


def test_theorem1_unbalanced_rejected():
    g = two_cliques(4)
    with pytest.raises(PreconditionError, match="balanced"):
        check_theorem1(g, np.array([0, 0, 0, 0, 0, 1, 1, 1]), np.tile([0, 1], 4))


def test_theorem2_complete_bipartite_hypothesis_holds_but_only_ties():
    a, b = np.meshgrid(range(10), range(10, 20))
    g = Graph.from_edges(20, np.stack([a.ravel(), b.ravel()], 1))
    y = np.repeat([0, 1], 10)
    h, limit = theorem2_hypothesis(g, y)
    assert h == 0.0 and h < limit
    w = check_theorem2(g, y)
    # c_0^2 = n/4 on a connected graph, so the best split is an exact tie
    assert not w.satisfied
    assert abs(w.gap) <= 1e-9


def test_theorem2_hypothesis_failure_reports_both_sides():
    g = two_cliques(5)
    with pytest.raises(PreconditionError, match="h=1.0"):
        check_theorem2(g, np.repeat([0, 1], 5))


def test_remark1_examples():
    g = Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    assert check_remark1(g, [0, 0, 0, 1, 1, 1]) <= 1e-10
    conn = sbm_generate(20, 2, 0.5, 0.3, 2, seed=0)
    assert check_remark1(conn, np.full(20, 3)) <= 1e-10
    with pytest.raises(PreconditionError):
        check_remark1(conn, conn.y)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 30), p=st.floats(0.05, 0.9), seed=st.integers(0, 10_000))
def test_homophily_identity_with_m(n, p, seed):
    g = random_graph(n, p, seed)
    if g.m == 0:
        return
    y = np.random.default_rng(seed).integers(0, 2, n)
    assert homophily_quadratic_residual(g, y, "m") <= 1e-12


def test_homophily_identity_with_2m_is_off_by_cross_edges():
    g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    y = np.array([0, 0, 1])
    # h = 1/3, y^T L y = 2 cross edges, 1 - 2/6 = 2/3
    assert homophily_quadratic_residual(g, y, "2m") == pytest.approx(1 / 3)
    assert homophily_quadratic_residual(g, y, "m") == pytest.approx(0.0, abs=1e-15)


def test_theorem3_examples():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(50, 16))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    assert theorem3_identity(Z, Z) <= 1e-10
    assert np.sum((Z + Z) ** 2) == pytest.approx(4 * 50, abs=1e-10)
    assert theorem3_identity(Z, -Z) <= 1e-10
    W = rng.normal(size=(50, 16))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    assert theorem3_identity(Z, W) <= 1e-10


def test_theorem3_requires_unit_rows():
    with pytest.raises(PreconditionError):
        theorem3_identity(np.ones((3, 2)), np.ones((3, 2)))
