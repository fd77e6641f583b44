import numpy as np
import pytest

from gasser.graph import Graph, sbm_generate


def random_graph(n, p, seed, d=3, labels=True):
    """Erdos-Renyi graph with balanced binary labels and Gaussian features."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    y = np.repeat([0, 1], [n - n // 2, n // 2]) if labels else None
    return Graph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1),
                            X=rng.standard_normal((n, d)), y=y)


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)], X=np.eye(3))


@pytest.fixture
def sbm200():
    return sbm_generate(200, 2, 0.1, 0.01, 8, seed=1)
