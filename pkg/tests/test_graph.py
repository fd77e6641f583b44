import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gasser.errors import GraphParseError, GraphRangeError, PreconditionError
from gasser.graph import (Graph, homophily, homophily_of, load_graph, normalized_adjacency,
                          normalized_laplacian, sbm_generate, unnormalized_laplacian, write_graph)

from conftest import random_graph


def _write(dirpath, edges, features, labels=None):
    (dirpath / "edges.tsv").write_text(edges)
    (dirpath / "features.csv").write_text(features)
    if labels is not None:
        (dirpath / "labels.txt").write_text(labels)


def test_load_simple(tmp_path):
    _write(tmp_path, "0 1\n1 2\n", "1,0\n0,1\n1,1\n")
    g = load_graph(tmp_path)
    assert (g.n, g.m) == (3, 2)


def test_load_dedups_reversed_pair(tmp_path):
    _write(tmp_path, "0 1\n1 0\n", "0\n0\n")
    g = load_graph(tmp_path)
    assert g.edges.tolist() == [[0, 1]]


def test_load_range_error_names_line(tmp_path):
    _write(tmp_path, "0 1\n0 7\n", "0\n0\n0\n")
    with pytest.raises(GraphRangeError, match=":2:"):
        load_graph(tmp_path)


def test_load_rejects_self_loop_with_location(tmp_path):
    _write(tmp_path, "0 1\n2 2\n", "0\n0\n0\n")
    with pytest.raises(GraphParseError, match=":2: self-loop"):
        load_graph(tmp_path)


def test_load_malformed_line(tmp_path):
    _write(tmp_path, "0 1\n1 x\n", "0\n0\n")
    with pytest.raises(GraphParseError, match=":2:"):
        load_graph(tmp_path)


def test_load_missing_directory(tmp_path):
    with pytest.raises(GraphParseError, match="nope"):
        load_graph(tmp_path / "nope")


def test_write_load_round_trip(tmp_path):
    g = sbm_generate(20, 2, 0.5, 0.1, 3, seed=4)
    g = g.with_edges(g.edges, np.linspace(0.1, 1.0, g.m)).replace(
        splits={"train": [0, 1], "val": [2], "test": [3, 4]})
    write_graph(g, tmp_path)
    h = load_graph(tmp_path)
    assert h.same_as(g)
    assert h.splits == g.splits


def test_normalized_adjacency_examples():
    single = Graph.from_edges(2, [(0, 1)])
    assert np.array_equal(normalized_adjacency(single).toarray(), [[0, 1], [1, 0]])
    path = Graph.from_edges(3, [(0, 1), (1, 2)])
    A = normalized_adjacency(path).toarray()
    assert A[0, 1] == pytest.approx(1 / np.sqrt(2)) and A[1, 2] == pytest.approx(1 / np.sqrt(2))
    iso = Graph.from_edges(4, [(0, 1), (1, 2)])
    assert not normalized_adjacency(iso).toarray()[3].any()


def test_laplacian_examples():
    single = Graph.from_edges(2, [(0, 1)])
    assert np.array_equal(unnormalized_laplacian(single).toarray(), [[1, -1], [-1, 1]])
    tri = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    L = unnormalized_laplacian(tri).toarray()
    assert np.all(np.diag(L) == 2) and L[0, 1] == -1 and L[1, 2] == -1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 25), p=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_lsym_plus_asym_is_identity_off_isolated(n, p, seed):
    g = random_graph(n, p, seed)
    S = normalized_laplacian(g).toarray() + normalized_adjacency(g).toarray()
    live = g.degrees() > 0
    assert np.allclose(S[np.ix_(live, live)], np.eye(live.sum()), atol=1e-15)
    A = normalized_adjacency(g).toarray()
    assert np.array_equal(A, A.T)
    ev = np.linalg.eigvalsh(A)
    assert ev.min() >= -1 - 1e-12 and ev.max() <= 1 + 1e-12


def test_homophily_examples():
    tri = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)], y=[0, 0, 1])
    assert homophily(tri) == pytest.approx(1 / 3)
    assert homophily_of(tri, [2, 2, 2]) == 1.0
    iu, ju = np.meshgrid(range(3), range(3, 6))
    kb = Graph.from_edges(6, np.stack([iu.ravel(), ju.ravel()], 1), y=[0, 0, 0, 1, 1, 1])
    assert homophily(kb) == 0.0


def test_homophily_errors():
    with pytest.raises(PreconditionError):
        homophily(Graph.from_edges(2, [(0, 1)]))
    with pytest.raises(PreconditionError):
        homophily(Graph.from_edges(2, [], y=[0, 1]))


def test_from_edges_rejects_self_loop():
    with pytest.raises(PreconditionError):
        Graph.from_edges(3, [(1, 1)])


def test_sbm_extremes():
    assert homophily(sbm_generate(20, 2, 1.0, 0.0, 2, seed=0)) == 1.0
    assert homophily(sbm_generate(20, 2, 0.0, 1.0, 2, seed=0)) == 0.0


def test_sbm_equal_probabilities_half_homophily():
    hs = [homophily(sbm_generate(200, 2, 0.1, 0.1, 2, seed=s)) for s in range(20)]
    assert abs(np.mean(hs) - 0.5) <= 0.1


def test_sbm_deterministic():
    a = sbm_generate(50, 2, 0.2, 0.05, 4, seed=3)
    b = sbm_generate(50, 2, 0.2, 0.05, 4, seed=3)
    assert a.same_as(b)
