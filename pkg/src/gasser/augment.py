"""Selective spectral augmentation of graph topology.

Pipeline per view: pick a band of eigenpairs, mix the band's eigenvectors
with random row-stochastic coefficients, re-orthonormalize, score every
existing edge and a sampled pool of non-edges by how much the reconstructed
normalized adjacency moved there, drop/add the top-scoring pairs and mask
feature columns.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericalError, PreconditionError
from .graph import Graph, normalized_adjacency
from .spectral import EigenSystem, MatrixKind, adjacency_eigensystem

WEIGHT_FLOOR = 1e-3
GS_COLLAPSE = 1e-10
GS_RETRIES = 10


class BandMode(str, enum.Enum):
    HOMOPHILIC = "homophilic"
    HETEROPHILIC = "heterophilic"
    SWAPPED = "swapped"

    def opposite(self) -> "BandMode":
        if self is BandMode.HOMOPHILIC:
            return BandMode.HETEROPHILIC
        if self is BandMode.HETEROPHILIC:
            return BandMode.HOMOPHILIC
        raise ConfigError("SWAPPED has no opposite")


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation hyper-parameters.

    ``r1``, ``r2`` and ``mask_ratio`` are fractions (0.1 == 10%). Drop and add
    budgets are both ``ceil(ratio * m)``. ``band_mode=SWAPPED`` uses the
    opposite of ``natural_mode``. ``pool_size=None`` means ``min(5m, available)``.
    """

    band_mode: BandMode = BandMode.HOMOPHILIC
    b0: int = 10
    band_size: int = 40
    pivot: float = 0.7
    r1: float = 0.2
    r2: float = 0.2
    pool_size: Optional[int] = None
    mask_ratio: float = 0.2
    weighted: bool = True
    seed: int = 0
    hetero_sampling: str = "stride"
    natural_mode: BandMode = BandMode.HOMOPHILIC

    def __post_init__(self):
        object.__setattr__(self, "band_mode", BandMode(self.band_mode))
        object.__setattr__(self, "natural_mode", BandMode(self.natural_mode))
        if self.natural_mode is BandMode.SWAPPED:
            raise ConfigError("natural_mode must be homophilic or heterophilic")
        if not 0.0 < self.pivot <= 1.0:
            raise ConfigError(f"pivot must lie in (0, 1], got {self.pivot}")
        for name in ("r1", "r2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigError(f"mask_ratio must lie in [0, 1), got {self.mask_ratio}")
        if self.b0 < 0 or self.band_size < 0:
            raise ConfigError("b0 and band_size must be non-negative")
        if self.hetero_sampling not in ("stride", "random"):
            raise ConfigError(f"hetero_sampling must be 'stride' or 'random'")

    @property
    def effective_mode(self) -> BandMode:
        if self.band_mode is BandMode.SWAPPED:
            return self.natural_mode.opposite()
        return self.band_mode

    def swapped(self) -> "AugmentConfig":
        """Config perturbing the opposite band (ablation B)."""
        return replace(self, band_mode=BandMode.SWAPPED, natural_mode=self.effective_mode)

    def replace(self, **changes) -> "AugmentConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class PerturbationPlan:
    B: np.ndarray
    b0: int
    gamma: np.ndarray
    gamma_eff: np.ndarray
    phi_tilde: np.ndarray
    phi_B: np.ndarray
    omega_B: np.ndarray
    seed: Optional[int] = None

    @property
    def correction(self) -> np.ndarray:
        """``C`` with ``A_tilde = A + Phi_B C Phi_B^T``; its diagonal holds the
        per-eigenvector bracket ``sum_j omega_j G_ji^2 - omega_i``."""
        G = self.gamma_eff
        C = (G.T * self.omega_B) @ G - np.diag(self.omega_B)
        return 0.5 * (C + C.T)


def budget(ratio: float, m: int) -> int:
    # guard against 0.3 * 10 = 3.0000000000000004 rounding up
    return int(math.ceil(ratio * m - 1e-9)) if ratio > 0 else 0


def _stream(seed, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *keys]))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --- band selection and eigenvector mixing -----------------------------------------

def select_band(es: EigenSystem, cfg: AugmentConfig) -> np.ndarray:
    """Indices (ascending frequency) of eigenpairs to perturb."""
    available = len(es)
    size = cfg.band_size
    mode = cfg.effective_mode
    if mode is BandMode.HOMOPHILIC:
        if cfg.b0 + size > available:
            raise PreconditionError(f"band b0+|B|={cfg.b0 + size} exceeds {available} eigenpairs")
        return np.arange(cfg.b0, cfg.b0 + size)
    # b0 does not apply to the heterophilic band
    if not es.complete:
        raise PreconditionError("heterophilic band needs a complete eigensystem")
    if size > available:
        raise PreconditionError(f"|B|={size} exceeds {available} eigenpairs")
    if size == 0:
        return np.arange(0)
    if cfg.hetero_sampling == "random":
        rng = _stream(cfg.seed, 7)
        return np.sort(rng.choice(available, size=size, replace=False))
    return np.arange(size) * available // size


def sample_gamma(B, pivot: float, seed=None) -> np.ndarray:
    """Row-stochastic ``|B| x |B|`` matrix with ``pivot`` on the diagonal.

    ``B`` is the band (or just its size); ``seed`` an int or a Generator.
    """
    k = int(B) if np.ndim(B) == 0 else len(B)
    rng = _rng(seed)
    if not 0.0 < pivot <= 1.0:
        raise PreconditionError(f"pivot must lie in (0, 1], got {pivot}")
    gamma = np.zeros((k, k))
    for i in range(k):
        gamma[i] = _gamma_row(k, i, pivot, rng)
    return gamma


def _gamma_row(k: int, i: int, pivot: float, rng: np.random.Generator) -> np.ndarray:
    row = np.zeros(k)
    if k == 1:
        row[0] = 1.0
        return row
    off = rng.uniform(0.0, 1.0, size=k - 1)
    off = off / off.sum() * (1.0 - pivot)
    row[np.arange(k) != i] = off
    row[i] = pivot
    return row


def perturb_eigenvectors(es: EigenSystem, B, gamma: np.ndarray,
                         rng: Optional[np.random.Generator] = None,
                         pivot: Optional[float] = None, seed: Optional[int] = None) -> PerturbationPlan:
    """Mix the band's eigenvectors by ``gamma`` and orthonormalize them in
    ascending-frequency order with modified Gram-Schmidt.

    The first (lowest-frequency) mixture is only normalized. A mixture that
    collapses below ``1e-10`` after projection gets its ``gamma`` row
    resampled from ``rng`` (up to 10 times). A pivot above 0.5 makes ``gamma``
    strictly diagonally dominant, hence nonsingular; ``pivot=0.5`` with
    ``|B|=2`` always collapses and ends in :class:`NumericalError`.
    """
    if es.kind is not MatrixKind.ADJ_SYM:
        raise PreconditionError("perturbation works on ADJ_SYM eigenpairs")
    B = np.asarray(B, dtype=np.int64)
    k = len(B)
    if k and (B.min() < 0 or B.max() >= len(es)):
        raise PreconditionError("band indices outside the eigensystem")
    gamma = np.array(gamma, dtype=np.float64, copy=True).reshape(k, k)
    Phi_B = es.vectors[:, B]
    if pivot is None:
        pivot = float(gamma[0, 0]) if k else 1.0
    if rng is None:
        rng = np.random.default_rng(0)
    phi = np.zeros((es.n, k))
    for i in range(k):
        for attempt in range(GS_RETRIES + 1):
            v = Phi_B @ gamma[i]
            for j in range(i):
                v = v - (phi[:, j] @ v) * phi[:, j]
            nrm = np.linalg.norm(v)
            if nrm >= GS_COLLAPSE:
                break
            if attempt == GS_RETRIES:
                raise NumericalError(f"Gram-Schmidt collapse on band vector {i} after {GS_RETRIES} retries")
            gamma[i] = _gamma_row(k, i, pivot, rng)
        phi[:, i] = v / nrm
    # one more projection against the band cleans the GS round-off
    G = phi.T @ Phi_B
    phi_tilde = Phi_B @ G.T
    return PerturbationPlan(B=B, b0=int(B.min()) if k else 0, gamma=gamma, gamma_eff=G,
                            phi_tilde=phi_tilde, phi_B=Phi_B,
                            omega_B=np.asarray(es.values[B], dtype=np.float64), seed=seed)


# --- reconstruction -------------------------------------------------------------------

def reconstruct_full(es: EigenSystem, plan: PerturbationPlan) -> np.ndarray:
    """Sum all decomposed components with the band's eigenvectors replaced."""
    if not es.complete:
        raise PreconditionError("full reconstruction needs a complete eigensystem")
    keep = np.ones(len(es), dtype=bool)
    keep[plan.B] = False
    V = es.vectors[:, keep]
    A = (V * es.values[keep]) @ V.T
    A += (plan.phi_tilde * plan.omega_B) @ plan.phi_tilde.T
    return A


def reconstruct_three_term(A_sym, es: Optional[EigenSystem], plan: PerturbationPlan) -> np.ndarray:
    """``A - sum_B omega phi phi^T + sum_B omega phi~ phi~^T``."""
    A = A_sym.toarray() if sp.issparse(A_sym) else np.array(A_sym, dtype=np.float64)
    A -= (plan.phi_B * plan.omega_B) @ plan.phi_B.T
    A += (plan.phi_tilde * plan.omega_B) @ plan.phi_tilde.T
    return A


def reconstruct_incremental(A_sym, es: Optional[EigenSystem], plan: PerturbationPlan,
                            diagonal_only: bool = False) -> np.ndarray:
    """``A + Phi_B C Phi_B^T`` with the coefficient-space correction ``C``.

    ``diagonal_only`` keeps just the bracket terms on ``phi_i phi_i^T`` and
    drops the ``phi_a phi_b^T`` cross terms; that variant does not reproduce
    the full reconstruction unless the band's eigenvalues coincide. ``es`` is
    unused (the plan carries the band) and kept for call symmetry.
    """
    A = A_sym.toarray() if sp.issparse(A_sym) else np.array(A_sym, dtype=np.float64)
    C = plan.correction
    if diagonal_only:
        C = np.diag(np.diag(C))
    return A + plan.phi_B @ C @ plan.phi_B.T


class EntryPerturbation:
    """Per-pair ``A_tilde[p, q]`` in ``O(|B|)`` after ``O(n|B|^2)`` setup.

    ``C = Q diag(mu) Q^T`` turns the correction into ``|B|`` rank-one terms
    ``mu_r psi_r psi_r^T`` with ``psi = Phi_B Q``.
    """

    def __init__(self, A_sym, plan: PerturbationPlan):
        self.A = sp.csr_matrix(A_sym)
        if len(plan.B):
            mu, Q = np.linalg.eigh(plan.correction)
            self.mu = mu
            self.psi = plan.phi_B @ Q
        else:
            self.mu = np.zeros(0)
            self.psi = np.zeros((self.A.shape[0], 0))

    def base(self, p, q) -> np.ndarray:
        p = np.asarray(p, dtype=np.int64)
        q = np.asarray(q, dtype=np.int64)
        return np.asarray(self.A[p.reshape(-1), q.reshape(-1)]).reshape(p.shape)

    def delta(self, p, q) -> np.ndarray:
        p = np.asarray(p, dtype=np.int64)
        q = np.asarray(q, dtype=np.int64)
        # psi_p * psi_q first: elementwise products commute exactly, so (p, q)
        # and (q, p) give bitwise-equal results
        return ((self.psi[p.reshape(-1)] * self.psi[q.reshape(-1)]) @ self.mu).reshape(p.shape)

    def __call__(self, p, q) -> np.ndarray:
        return self.base(p, q) + self.delta(p, q)


def entry_perturbation(A_sym, es: EigenSystem, plan: PerturbationPlan, p: int, q: int) -> float:
    """Single entry of the reconstructed adjacency."""
    n = A_sym.shape[0]
    if not (0 <= p < n and 0 <= q < n):
        raise PreconditionError(f"entry ({p}, {q}) outside [0, {n})")
    return float(EntryPerturbation(A_sym, plan)(np.array([p]), np.array([q]))[0])


# --- edge scoring and flipping --------------------------------------------------------

def score_existing_edges(g: Graph, A_sym, es: Optional[EigenSystem], plan: PerturbationPlan
                         ) -> np.ndarray:
    """Relative perturbation ``|A~ - A| / A`` for every edge of ``g``."""
    return _score_existing(g, EntryPerturbation(A_sym, plan))[0]


def score_candidate_edges(g: Graph, es: Optional[EigenSystem], plan: PerturbationPlan, pool,
                          A_sym=None) -> np.ndarray:
    """``A~ / A_proxy`` with ``A_proxy = 1/sqrt(d_i d_j)`` for every pool pair."""
    if A_sym is None:
        A_sym = normalized_adjacency(g)
    return _score_candidates(g, EntryPerturbation(A_sym, plan), pool)[0]


def _score_existing(g: Graph, entries: EntryPerturbation) -> Tuple[np.ndarray, np.ndarray]:
    p, q = g.edges[:, 0], g.edges[:, 1]
    base = entries.base(p, q)
    delta = entries.delta(p, q)
    return np.abs(delta) / base, base + delta


def sample_edge_pool(g: Graph, pool_size: Optional[int], seed=None) -> np.ndarray:
    """Uniform sample of non-edges whose endpoints both have positive degree."""
    rng = _rng(seed)
    active = np.flatnonzero(g.degrees() > 0)
    na = len(active)
    available = na * (na - 1) // 2 - g.m
    if pool_size is None:
        pool_size = min(5 * g.m, available)
    if pool_size < 0 or pool_size > available:
        raise PreconditionError(f"pool size {pool_size} infeasible: only {available} candidate pairs")
    if pool_size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if pool_size * 2 > available:
        iu, ju = np.triu_indices(na, k=1)
        cand = np.stack([active[iu], active[ju]], axis=1)
        cand = cand[~g.has_edges(cand)]
        pick = np.sort(rng.choice(len(cand), size=pool_size, replace=False))
        return cand[pick]
    edge_keys = g.edge_keys()
    keys = np.zeros(0, dtype=np.int64)
    while len(keys) < pool_size:
        draw = rng.integers(0, na, size=(2 * (pool_size - len(keys)) + 64, 2))
        draw = draw[draw[:, 0] != draw[:, 1]]
        i = active[draw.min(axis=1)]
        j = active[draw.max(axis=1)]
        new = i * g.n + j
        new = new[~np.isin(new, edge_keys)]
        keys = np.concatenate([keys, new])
        # keep the first occurrence of each pair, in draw order
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)][:pool_size]
    pool = np.stack([keys // g.n, keys % g.n], axis=1)
    return pool[np.lexsort((pool[:, 1], pool[:, 0]))]


def _score_candidates(g: Graph, entries: EntryPerturbation, pool: np.ndarray
                      ) -> Tuple[np.ndarray, np.ndarray]:
    pool = np.asarray(pool, dtype=np.int64).reshape(-1, 2)
    d = g.degrees()
    di, dj = d[pool[:, 0]], d[pool[:, 1]]
    if np.any(di <= 0) or np.any(dj <= 0):
        raise PreconditionError("pool pair with a zero-degree endpoint")
    vals = entries(pool[:, 0], pool[:, 1])
    return vals * np.sqrt(di * dj), vals


def _top(scores: np.ndarray, pairs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores; ties go to the lexicographically smaller pair."""
    order = np.lexsort((pairs[:, 1], pairs[:, 0], -scores))
    return order[:k]


def rescale_weights(values: np.ndarray, floor: float = WEIGHT_FLOOR) -> np.ndarray:
    """Min-max map into ``[floor, 1]`` after clamping negatives to 0."""
    v = np.maximum(np.asarray(values, dtype=np.float64), 0.0)
    if len(v) == 0:
        return v
    lo, hi = v.min(), v.max()
    if hi - lo <= 0.0:
        return np.ones_like(v)
    return np.clip(floor + (1.0 - floor) * (v - lo) / (hi - lo), floor, 1.0)


def flip_edges(g: Graph, psi_plus: np.ndarray, psi_minus: np.ndarray, cfg: AugmentConfig,
               pool: Optional[np.ndarray] = None, edge_values: Optional[np.ndarray] = None,
               pool_values: Optional[np.ndarray] = None) -> Graph:
    """Drop the ``ceil(r1 m)`` highest-``psi_plus`` edges, add the
    ``ceil(r2 m)`` highest-``psi_minus`` pool pairs and assign weights."""
    m = g.m
    n_drop = budget(cfg.r1, m)
    if n_drop and n_drop >= m:
        raise PreconditionError(f"drop budget {n_drop} >= m={m}")
    pool = np.zeros((0, 2), np.int64) if pool is None else np.asarray(pool, dtype=np.int64).reshape(-1, 2)
    if len(psi_plus) != m or len(psi_minus) != len(pool):
        raise PreconditionError("scores do not cover all edges / pool pairs")
    n_add = min(budget(cfg.r2, m), len(pool))
    dropped = _top(psi_plus, g.edges, n_drop)
    keep = np.ones(m, dtype=bool)
    keep[dropped] = False
    added = _top(psi_minus, pool, n_add)
    edges = np.concatenate([g.edges[keep], pool[added]])
    if cfg.weighted and edge_values is not None:
        vals = np.concatenate([edge_values[keep],
                               pool_values[added] if pool_values is not None else np.ones(n_add)])
        weights = rescale_weights(vals)
    elif cfg.weighted:
        weights = np.concatenate([g.weights[keep], np.ones(n_add)])
    else:
        weights = np.ones(len(edges))
    return g.with_edges(edges, weights)


def mask_features(X: np.ndarray, mask_ratio: float, seed=None) -> np.ndarray:
    """Zero a uniformly chosen ``ceil(mask_ratio * d)`` subset of columns."""
    rng = _rng(seed)
    if not 0.0 <= mask_ratio < 1.0:
        raise PreconditionError(f"mask_ratio must lie in [0, 1), got {mask_ratio}")
    X = np.array(X, dtype=np.float64, copy=True)
    k = budget(mask_ratio, X.shape[1])
    if k:
        X[:, rng.choice(X.shape[1], size=k, replace=False)] = 0.0
    return X


# --- views ------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AugmentedView:
    topology: Graph
    features: np.ndarray
    plan: Optional[PerturbationPlan] = field(default=None, repr=False)


class Augmenter:
    """Holds the one-off decomposition of a graph and produces views.

    ``es`` may be a partial system (Lanczos) as long as it covers the band.
    """

    def __init__(self, g: Graph, es: Optional[EigenSystem] = None):
        self.g = g
        self.A_sym = normalized_adjacency(g)
        self.es = es if es is not None else adjacency_eigensystem(g)
        if self.es.kind is MatrixKind.LAP_SYM:
            self.es = self.es.as_adjacency()

    def plan(self, cfg: AugmentConfig, rng: np.random.Generator) -> PerturbationPlan:
        B = select_band(self.es, cfg)
        gamma = sample_gamma(len(B), cfg.pivot, rng)
        return perturb_eigenvectors(self.es, B, gamma, rng=rng, pivot=cfg.pivot, seed=cfg.seed)

    def view(self, cfg: AugmentConfig, seed) -> AugmentedView:
        g = self.g
        rng_gamma, rng_pool, rng_mask = (_stream(seed, k) for k in (1, 2, 3))
        plan = self.plan(cfg, rng_gamma)
        entries = EntryPerturbation(self.A_sym, plan)
        psi_plus, edge_vals = _score_existing(g, entries)
        if budget(cfg.r2, g.m):
            pool = sample_edge_pool(g, cfg.pool_size, rng_pool)
            psi_minus, pool_vals = _score_candidates(g, entries, pool)
        else:
            pool = np.zeros((0, 2), dtype=np.int64)
            psi_minus = pool_vals = np.zeros(0)
        topo = flip_edges(g, psi_plus, psi_minus, cfg, pool, edge_vals, pool_vals)
        return AugmentedView(topo, mask_features(g.X, cfg.mask_ratio, rng_mask), plan)

    def views(self, cfg: AugmentConfig) -> Tuple[AugmentedView, AugmentedView]:
        return self.view(cfg, _view_seed(cfg.seed, 0)), self.view(cfg, _view_seed(cfg.seed, 1))


def _view_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(seed), 1000 + k]).generate_state(1)[0])


def make_views(g: Graph, cfg: AugmentConfig, es: Optional[EigenSystem] = None
               ) -> Tuple[AugmentedView, AugmentedView]:
    """Two independently seeded augmented views of ``g``."""
    return Augmenter(g, es).views(cfg)


def random_view(g: Graph, cfg: AugmentConfig, seed) -> AugmentedView:
    """Uniform drop/add with the same budgets and masking, unit weights."""
    rng = _stream(seed, 4)
    m = g.m
    n_drop = budget(cfg.r1, m)
    if n_drop and n_drop >= m:
        raise PreconditionError(f"drop budget {n_drop} >= m={m}")
    keep = np.ones(m, dtype=bool)
    if n_drop:
        keep[rng.choice(m, size=n_drop, replace=False)] = False
    n_add = budget(cfg.r2, m)
    added = np.zeros((0, 2), dtype=np.int64)
    if n_add:
        pool = sample_edge_pool(g, min(n_add, _available_pairs(g)), rng)
        added = pool
    edges = np.concatenate([g.edges[keep], added])
    topo = g.with_edges(edges, np.ones(len(edges)))
    return AugmentedView(topo, mask_features(g.X, cfg.mask_ratio, _stream(seed, 3)))


def _available_pairs(g: Graph) -> int:
    na = int(np.count_nonzero(g.degrees() > 0))
    return na * (na - 1) // 2 - g.m


def random_views(g: Graph, cfg: AugmentConfig) -> Tuple[AugmentedView, AugmentedView]:
    return random_view(g, cfg, _view_seed(cfg.seed, 0)), random_view(g, cfg, _view_seed(cfg.seed, 1))
