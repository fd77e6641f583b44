"""Graph container, normalized matrices, homophily and dataset I/O."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import GraphParseError, GraphRangeError, PreconditionError
from .io import atomic_write_text

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.txt"
SPLITS_FILE = "splits.json"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph with node features and optional labels.

    ``edges`` is an ``(m, 2)`` int array of canonical pairs ``i < j`` in
    lexicographic order, ``weights`` the matching positive weights. Build
    instances with :meth:`from_edges`, which symmetrizes and deduplicates.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray
    X: np.ndarray
    y: Optional[np.ndarray] = None
    splits: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != self.n:
            raise PreconditionError(f"feature rows {X.shape[0]} != n={self.n}")
        if len(weights) != len(edges):
            raise PreconditionError("edges and weights differ in length")
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.n:
                raise GraphRangeError(f"edge endpoint outside [0, {self.n})")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise PreconditionError("edges must be canonical pairs i < j (no self-loops)")
            keys = edges[:, 0] * self.n + edges[:, 1]
            if np.any(np.diff(keys) <= 0):
                raise PreconditionError("edges must be sorted and unique")
            if not np.all(weights > 0):
                raise PreconditionError("edge weights must be strictly positive")
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "X", _frozen(X))
        if self.y is not None:
            y = np.asarray(self.y, dtype=np.int64).reshape(-1)
            if len(y) != self.n:
                raise PreconditionError(f"label count {len(y)} != n={self.n}")
            if len(y) and y.min() < 0:
                raise PreconditionError("labels must be non-negative class ids")
            object.__setattr__(self, "y", _frozen(y))

    @classmethod
    def from_edges(cls, n: int, pairs: Iterable, X=None, y=None, weights=None,
                   splits: Optional[dict] = None) -> "Graph":
        """Canonicalize an arbitrary pair list into a :class:`Graph`.

        Pairs are symmetrized, self-loops rejected and duplicates collapsed
        (first occurrence wins for the weight).
        """
        pairs = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs,
                           dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(len(pairs))
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(pairs) and (pairs.min() < 0 or pairs.max() >= n):
            raise GraphRangeError(f"edge endpoint outside [0, {n})")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            k = int(np.flatnonzero(pairs[:, 0] == pairs[:, 1])[0])
            raise PreconditionError(f"self-loop at pair index {k}: ({pairs[k, 0]}, {pairs[k, 0]})")
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        keys = lo * n + hi
        _, first = np.unique(keys, return_index=True)
        edges = np.stack([lo[first], hi[first]], axis=1)
        if X is None:
            X = np.zeros((n, 0))
        return cls(n=n, edges=edges, weights=weights[first], X=X, y=y, splits=splits)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def num_classes(self) -> int:
        if self.y is None:
            return 0
        return int(self.y.max()) + 1 if self.n else 0

    @property
    def is_weighted(self) -> bool:
        return bool(np.any(self.weights != 1.0))

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric weighted adjacency matrix in CSR form."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        A = sp.coo_matrix((np.concatenate([self.weights, self.weights]),
                           (np.concatenate([i, j]), np.concatenate([j, i]))),
                          shape=(self.n, self.n))
        return A.tocsr()

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n)
        np.add.at(d, self.edges[:, 0], self.weights)
        np.add.at(d, self.edges[:, 1], self.weights)
        return d

    def edge_keys(self) -> np.ndarray:
        """Scalar key ``i * n + j`` per canonical edge, sorted ascending."""
        return self.edges[:, 0] * self.n + self.edges[:, 1]

    def has_edges(self, pairs: np.ndarray) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        keys = self.edge_keys()
        q = lo * self.n + hi
        if not len(keys):
            return np.zeros(len(q), dtype=bool)
        pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
        return keys[pos] == q

    def replace(self, **changes) -> "Graph":
        fields = dict(n=self.n, edges=self.edges, weights=self.weights, X=self.X,
                      y=self.y, splits=self.splits)
        fields.update(changes)
        return Graph(**fields)

    def with_edges(self, edges: np.ndarray, weights: Optional[np.ndarray] = None) -> "Graph":
        """Same nodes, features and labels over a new edge set."""
        return Graph.from_edges(self.n, edges, X=self.X, y=self.y, weights=weights,
                                splits=self.splits)

    def same_as(self, other: "Graph") -> bool:
        """Exact structural and data equality."""
        if self.n != other.n or self.m != other.m:
            return False
        if not (np.array_equal(self.edges, other.edges)
                and np.array_equal(self.weights, other.weights)
                and self.X.shape == other.X.shape and np.array_equal(self.X, other.X)):
            return False
        if (self.y is None) != (other.y is None):
            return False
        return self.y is None or np.array_equal(self.y, other.y)


def _inv_sqrt_degrees(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return out


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """``D^{-1/2} A D^{-1/2}``; isolated nodes get all-zero rows."""
    s = _inv_sqrt_degrees(g.degrees())
    i, j = g.edges[:, 0], g.edges[:, 1]
    # one value per canonical pair keeps the matrix bitwise symmetric
    vals = g.weights * s[i] * s[j]
    M = sp.coo_matrix((np.concatenate([vals, vals]),
                       (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(g.n, g.n))
    return M.tocsr()


def unnormalized_laplacian(g: Graph) -> sp.csr_matrix:
    """``L = D - A``."""
    return (sp.diags(g.degrees()) - g.adjacency()).tocsr()


def normalized_laplacian(g: Graph) -> sp.csr_matrix:
    """``I - A_sym`` with zero diagonal at isolated nodes."""
    diag = (g.degrees() > 0).astype(np.float64)
    return (sp.diags(diag) - normalized_adjacency(g)).tocsr()


def homophily_of(g: Graph, labels) -> float:
    """Fraction of edges (counted, not weighted) joining equal labels."""
    labels = np.asarray(labels).reshape(-1)
    if len(labels) != g.n:
        raise PreconditionError(f"label count {len(labels)} != n={g.n}")
    if g.m == 0:
        raise PreconditionError("homophily is undefined on a graph without edges")
    same = labels[g.edges[:, 0]] == labels[g.edges[:, 1]]
    return float(np.count_nonzero(same)) / g.m


def homophily(g: Graph) -> float:
    if g.y is None:
        raise PreconditionError("homophily requires node labels")
    return homophily_of(g, g.y)


def sbm_generate(n: int, C: int, p_in: float, p_out: float, d: int, seed: int,
                 signal: float = 1.0) -> Graph:
    """Balanced stochastic block model with noisy one-hot class features.

    Nodes ``[k*n/C, (k+1)*n/C)`` form block ``k``. Feature column ``y % d``
    carries ``signal`` on top of unit-variance Gaussian noise.
    """
    if C < 1 or n % C:
        raise PreconditionError(f"n={n} must be divisible by C={C}")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise PreconditionError("edge probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(C), n // C)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(y[iu] == y[ju], p_in, p_out)
    keep = rng.random(len(iu)) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    X = rng.standard_normal((n, d))
    if d > 0:
        X[np.arange(n), y % d] += signal
    return Graph(n=n, edges=edges, weights=np.ones(len(edges)), X=X, y=y)


# --- dataset directories -------------------------------------------------------

def _read_features(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise GraphParseError(f"{path}:{lineno}: non-numeric feature value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise GraphParseError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            rows.append(row)
    return np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)


def _read_edges(path: Path, n: int):
    pairs, weights = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) not in (2, 3):
                raise GraphParseError(f"{path}:{lineno}: expected 'i j [w]', got {line!r}")
            try:
                i, j = int(toks[0]), int(toks[1])
                w = float(toks[2]) if len(toks) == 3 else 1.0
            except ValueError:
                raise GraphParseError(f"{path}:{lineno}: malformed edge {line!r}") from None
            if not (0 <= i < n and 0 <= j < n):
                raise GraphRangeError(f"{path}:{lineno}: node id out of range [0, {n}) in {line!r}")
            if i == j:
                raise GraphParseError(f"{path}:{lineno}: self-loop on node {i}")
            if not w > 0:
                raise GraphParseError(f"{path}:{lineno}: edge weight must be positive")
            pairs.append((i, j))
            weights.append(w)
    return np.array(pairs, dtype=np.int64).reshape(-1, 2), np.array(weights)


def load_graph(directory) -> Graph:
    """Read a dataset directory (``edges.tsv``, ``features.csv``, optional
    ``labels.txt`` and ``splits.json``). ``n`` is the feature row count."""
    directory = Path(directory)
    if not directory.is_dir():
        raise GraphParseError(f"dataset directory not found: {directory}")
    for name in (EDGES_FILE, FEATURES_FILE):
        if not (directory / name).exists():
            raise GraphParseError(f"missing {directory / name}")
    X = _read_features(directory / FEATURES_FILE)
    n = X.shape[0]
    pairs, weights = _read_edges(directory / EDGES_FILE, n)
    y = None
    if (directory / LABELS_FILE).exists():
        vals = []
        with open(directory / LABELS_FILE) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    vals.append(int(line))
                except ValueError:
                    raise GraphParseError(f"{directory / LABELS_FILE}:{lineno}: "
                                          f"label must be an integer") from None
        y = np.array(vals, dtype=np.int64)
        if len(y) != n:
            raise GraphParseError(f"{directory / LABELS_FILE}: {len(y)} labels for {n} nodes")
    splits = None
    if (directory / SPLITS_FILE).exists():
        with open(directory / SPLITS_FILE) as fh:
            raw = json.load(fh)
        splits = {k: [int(v) for v in raw.get(k, [])] for k in ("train", "val", "test")}
        for ids in splits.values():
            if any(not 0 <= v < n for v in ids):
                raise GraphRangeError(f"{directory / SPLITS_FILE}: node id out of range")
    return Graph.from_edges(n, pairs, X=X, y=y, weights=weights, splits=splits)


def write_graph(g: Graph, directory, weighted: Optional[bool] = None) -> None:
    """Write ``g`` in the dataset layout read by :func:`load_graph`.

    Weights go in a third column when ``weighted`` (default: only if some
    weight differs from 1). Floats use 17 significant digits so that a
    write/load round trip is exact.
    """
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    if weighted is None:
        weighted = g.is_weighted
    if weighted:
        lines = [f"{i} {j} {w:.17g}" for (i, j), w in zip(g.edges.tolist(), g.weights.tolist())]
    else:
        lines = [f"{i} {j}" for i, j in g.edges.tolist()]
    atomic_write_text(directory / EDGES_FILE, "".join(s + "\n" for s in lines))
    feat = "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in g.X.tolist())
    atomic_write_text(directory / FEATURES_FILE, feat)
    if g.y is not None:
        atomic_write_text(directory / LABELS_FILE, "".join(f"{v}\n" for v in g.y.tolist()))
    if g.splits is not None:
        atomic_write_text(directory / SPLITS_FILE, json.dumps(g.splits, sort_keys=True) + "\n")
