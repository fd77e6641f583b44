import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gasser.augment import (AugmentConfig, Augmenter, BandMode, EntryPerturbation, budget,
                            entry_perturbation, flip_edges, make_views, mask_features,
                            perturb_eigenvectors, random_views, reconstruct_full,
                            reconstruct_incremental, reconstruct_three_term, rescale_weights,
                            sample_edge_pool, sample_gamma, score_candidate_edges,
                            score_existing_edges, select_band)
from gasser.errors import ConfigError, NumericalError, PreconditionError
from gasser.graph import Graph, normalized_adjacency, sbm_generate
from gasser.spectral import EigenSystem, MatrixKind, adjacency_eigensystem

from conftest import random_graph


def fake_system(n):
    return EigenSystem(MatrixKind.ADJ_SYM, np.linspace(1, -1, n), np.eye(n), complete=True)


def make_plan(g, b0, k, pivot, seed):
    es = adjacency_eigensystem(g)
    B = select_band(es, AugmentConfig(b0=b0, band_size=k))
    plan = perturb_eigenvectors(es, B, sample_gamma(B, pivot, seed), rng=np.random.default_rng(seed))
    return es, plan


# --- band selection ------------------------------------------------------------------

def test_select_band_homophilic():
    assert select_band(fake_system(10), AugmentConfig(b0=2, band_size=3)).tolist() == [2, 3, 4]


def test_select_band_heterophilic_stride():
    cfg = AugmentConfig(band_mode="heterophilic", b0=7, band_size=5)
    assert select_band(fake_system(100), cfg).tolist() == [0, 20, 40, 60, 80]


def test_select_band_too_large():
    with pytest.raises(PreconditionError):
        select_band(fake_system(10), AugmentConfig(b0=8, band_size=5))


def test_select_band_swapped_uses_opposite_mode():
    cfg = AugmentConfig(b0=2, band_size=5).swapped()
    assert cfg.band_mode is BandMode.SWAPPED
    assert select_band(fake_system(100), cfg).tolist() == [0, 20, 40, 60, 80]
    het = AugmentConfig(band_mode="heterophilic", b0=2, band_size=3).swapped()
    assert select_band(fake_system(10), het).tolist() == [2, 3, 4]


def test_select_band_random_hetero_mode_is_seeded():
    cfg = AugmentConfig(band_mode="heterophilic", band_size=6, hetero_sampling="random", seed=3)
    a = select_band(fake_system(50), cfg)
    assert np.array_equal(a, select_band(fake_system(50), cfg))
    assert len(np.unique(a)) == 6


def test_config_validation():
    with pytest.raises(ConfigError):
        AugmentConfig(pivot=0.0)
    with pytest.raises(ConfigError):
        AugmentConfig(r1=1.0)


# --- gamma ------------------------------------------------------------------------------

def test_gamma_pivot_one_is_identity():
    assert np.array_equal(sample_gamma(4, 1.0, 0), np.eye(4))


def test_gamma_single_member():
    assert np.array_equal(sample_gamma(1, 0.3, 0), [[1.0]])


@settings(max_examples=40, deadline=None)
@given(k=st.integers(1, 12), pivot=st.floats(0.01, 1.0), seed=st.integers(0, 2 ** 31))
def test_gamma_rows_are_stochastic(k, pivot, seed):
    G = sample_gamma(k, pivot, seed)
    assert np.abs(G.sum(axis=1) - 1).max() <= 1e-10
    assert G.min() >= 0
    if k > 1:
        assert np.all(np.diag(G) == pivot)


def test_gamma_is_seeded():
    assert np.array_equal(sample_gamma(5, 0.7, 9), sample_gamma(5, 0.7, 9))
    assert not np.array_equal(sample_gamma(5, 0.7, 9), sample_gamma(5, 0.7, 10))


# --- perturbation ---------------------------------------------------------------------

def test_identity_gamma_keeps_band():
    g = random_graph(20, 0.3, 1)
    es = adjacency_eigensystem(g)
    B = np.arange(2, 6)
    plan = perturb_eigenvectors(es, B, np.eye(4))
    assert np.abs(plan.phi_tilde - es.vectors[:, B]).max() <= 1e-12


def test_orthogonality_example():
    g = random_graph(20, 0.3, 2)
    es, plan = make_plan(g, 3, 3, 0.9, 0)
    P = plan.phi_tilde
    assert np.abs(P.T @ P - np.eye(3)).max() <= 1e-8
    rest = np.delete(es.vectors, plan.B, axis=1)
    assert np.abs(rest.T @ P).max() <= 1e-8


def test_first_band_vector_is_normalized_mixture():
    g = random_graph(20, 0.3, 3)
    es, plan = make_plan(g, 1, 4, 0.7, 5)
    v = es.vectors[:, plan.B] @ plan.gamma[0]
    assert np.abs(plan.phi_tilde[:, 0] - v / np.linalg.norm(v)).max() <= 1e-12


def test_collapse_raises_numerical_error():
    g = random_graph(20, 0.3, 3)
    es = adjacency_eigensystem(g)
    with pytest.raises(NumericalError):
        perturb_eigenvectors(es, np.array([2, 3]), sample_gamma(2, 0.5, 0), pivot=0.5)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(6, 36), p=st.floats(0.15, 0.8), seed=st.integers(0, 10_000),
       k=st.integers(1, 5), pivot=st.sampled_from([0.6, 0.7, 0.9, 1.0]))
def test_plan_invariants(n, p, seed, k, pivot):
    g = random_graph(n, p, seed)
    k = min(k, n - 1)
    b0 = seed % (n - k + 1)
    es, plan = make_plan(g, b0, k, pivot, seed)
    P = plan.phi_tilde
    assert np.abs(P.T @ P - np.eye(k)).max() <= 1e-8
    assert np.abs(np.delete(es.vectors, plan.B, axis=1).T @ P).max() <= 1e-8
    assert np.abs(P - es.vectors[:, plan.B] @ plan.gamma_eff.T).max() <= 1e-8
    A = normalized_adjacency(g)
    full = reconstruct_full(es, plan)
    # spectrum preserved
    assert np.abs(np.linalg.eigvalsh(full) - np.linalg.eigvalsh(A.toarray())).max() <= 1e-8
    for other in (reconstruct_three_term(A, es, plan), reconstruct_incremental(A, es, plan)):
        assert np.abs(other - full).max() <= 1e-8


# --- reconstruction -------------------------------------------------------------------

def test_empty_band_and_identity_gamma_reproduce_asym():
    g = random_graph(15, 0.4, 4)
    es = adjacency_eigensystem(g)
    A = normalized_adjacency(g)
    empty = perturb_eigenvectors(es, np.array([], dtype=int), np.zeros((0, 0)))
    assert np.abs(reconstruct_full(es, empty) - A.toarray()).max() <= 1e-8
    assert np.array_equal(reconstruct_incremental(A, es, empty), A.toarray())
    assert entry_perturbation(A, es, empty, 0, 1) == A[0, 1]
    ident = perturb_eigenvectors(es, np.arange(3, 7), np.eye(4))
    assert np.abs(reconstruct_full(es, ident) - A.toarray()).max() <= 1e-8


def test_full_reconstruction_needs_complete_system():
    g = random_graph(15, 0.4, 4)
    es = adjacency_eigensystem(g, K=5)
    plan = perturb_eigenvectors(es, np.arange(1, 4), sample_gamma(3, 0.7, 0))
    with pytest.raises(PreconditionError):
        reconstruct_full(es, plan)


def test_partial_system_incremental_matches_full():
    g = random_graph(30, 0.3, 8)
    full_es = adjacency_eigensystem(g)
    part_es = adjacency_eigensystem(g, K=10)
    gamma = sample_gamma(4, 0.7, 1)
    B = np.arange(4, 8)
    A = normalized_adjacency(g)
    inc = reconstruct_incremental(A, part_es, perturb_eigenvectors(part_es, B, gamma))
    ref = reconstruct_full(full_es, perturb_eigenvectors(full_es, B, gamma))
    assert np.abs(inc - ref).max() <= 1e-8


def test_diagonal_only_variant_differs_from_full():
    g = random_graph(25, 0.3, 6)
    es, plan = make_plan(g, 2, 4, 0.7, 2)
    A = normalized_adjacency(g)
    diag = reconstruct_incremental(A, es, plan, diagonal_only=True)
    assert np.abs(diag - reconstruct_full(es, plan)).max() > 1e-6


def test_entry_perturbation_matches_dense_and_is_symmetric():
    g = random_graph(25, 0.3, 7)
    es, plan = make_plan(g, 3, 5, 0.7, 4)
    A = normalized_adjacency(g)
    dense = reconstruct_incremental(A, es, plan)
    E = EntryPerturbation(A, plan)
    p, q = np.meshgrid(np.arange(25), np.arange(25), indexing="ij")
    vals = E(p.ravel(), q.ravel()).reshape(25, 25)
    assert np.abs(vals - dense).max() <= 1e-10
    assert np.array_equal(vals, vals.T)
    assert entry_perturbation(A, es, plan, 3, 9) == entry_perturbation(A, es, plan, 9, 3)
    with pytest.raises(PreconditionError):
        entry_perturbation(A, es, plan, 0, 25)


def test_band_locality_projector():
    g = random_graph(30, 0.3, 9)
    es, plan = make_plan(g, 4, 5, 0.7, 1)
    A = normalized_adjacency(g)
    delta = reconstruct_full(es, plan) - A.toarray()
    rest = np.delete(es.vectors, plan.B, axis=1)
    P = rest @ rest.T
    assert np.abs(P @ delta @ P).max() <= 1e-8


# --- scoring ----------------------------------------------------------------------------

def test_existing_scores_zero_for_empty_band():
    g = random_graph(15, 0.4, 4)
    es = adjacency_eigensystem(g)
    empty = perturb_eigenvectors(es, np.array([], dtype=int), np.zeros((0, 0)))
    assert np.all(score_existing_edges(g, normalized_adjacency(g), es, empty) == 0)
    pool = sample_edge_pool(g, 5, 0)
    assert np.all(score_candidate_edges(g, es, empty, pool) == 0)


def test_existing_scores_match_dense_relative_change():
    g = random_graph(25, 0.3, 11)
    es, plan = make_plan(g, 2, 4, 0.7, 3)
    A = normalized_adjacency(g)
    dense = reconstruct_full(es, plan)
    i, j = g.edges.T
    ref = np.abs(dense[i, j] - A.toarray()[i, j]) / A.toarray()[i, j]
    assert np.abs(score_existing_edges(g, A, es, plan) - ref).max() <= 1e-10


def test_existing_scores_invariant_to_weight_scaling():
    g = random_graph(25, 0.3, 12)
    g3 = g.with_edges(g.edges, 3.0 * g.weights)
    es, plan = make_plan(g, 2, 4, 0.7, 3)
    es3 = adjacency_eigensystem(g3)
    plan3 = perturb_eigenvectors(es3, plan.B, plan.gamma)
    s = score_existing_edges(g, normalized_adjacency(g), es, plan)
    s3 = score_existing_edges(g3, normalized_adjacency(g3), es3, plan3)
    assert np.abs(s - s3).max() <= 1e-8


def test_candidate_scores_match_dense_oracle():
    g = random_graph(25, 0.3, 13)
    es, plan = make_plan(g, 2, 4, 0.7, 3)
    pool = sample_edge_pool(g, 30, 1)
    dense = reconstruct_full(es, plan)
    d = g.degrees()
    i, j = pool.T
    ref = dense[i, j] * np.sqrt(d[i] * d[j])
    assert np.abs(score_candidate_edges(g, es, plan, pool) - ref).max() <= 1e-10


def test_candidate_arithmetic_example():
    # psi- = A~ / (1/sqrt(4*4)) = 0.1 * 4
    assert 0.1 / (1 / np.sqrt(4 * 4)) == pytest.approx(0.4)


def test_candidate_zero_degree_rejected():
    g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3)])
    es, plan = make_plan(g, 1, 2, 0.7, 0)
    with pytest.raises(PreconditionError):
        score_candidate_edges(g, es, plan, np.array([[0, 4]]))


# --- edge pool --------------------------------------------------------------------------

def test_pool_complete_graph():
    n = 6
    g = Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    assert len(sample_edge_pool(g, 0, 0)) == 0
    with pytest.raises(PreconditionError):
        sample_edge_pool(g, 1, 0)


@pytest.mark.parametrize("size", [5, 60, None])
def test_pool_entries_are_non_edges(size):
    g = random_graph(20, 0.2, 14)
    pool = sample_edge_pool(g, size, 3)
    assert not g.has_edges(pool).any()
    assert np.all(pool[:, 0] < pool[:, 1])
    keys = pool[:, 0] * 20 + pool[:, 1]
    assert len(np.unique(keys)) == len(keys)
    d = g.degrees()
    assert np.all(d[pool] > 0)


def test_pool_default_size():
    g = random_graph(40, 0.05, 15)
    active = int(np.count_nonzero(g.degrees() > 0))
    available = active * (active - 1) // 2 - g.m
    assert len(sample_edge_pool(g, None, 0)) == min(5 * g.m, available)


def test_pool_is_seeded():
    g = random_graph(40, 0.1, 15)
    assert np.array_equal(sample_edge_pool(g, 20, 4), sample_edge_pool(g, 20, 4))


# --- flipping, weights, masking -----------------------------------------------------------

def test_budget_arithmetic():
    assert budget(0.1, 40) == 4
    assert budget(0.3, 10) == 3
    assert budget(0.0, 10) == 0


def test_flip_no_change_when_ratios_zero():
    g = random_graph(20, 0.3, 16)
    cfg = AugmentConfig(r1=0.0, r2=0.0, weighted=False)
    out = flip_edges(g, np.zeros(g.m), np.zeros(0), cfg)
    assert out.same_as(g)


def test_flip_counts_and_subsets():
    g = random_graph(20, 0.2, 17)
    es, plan = make_plan(g, 2, 4, 0.7, 3)
    A = normalized_adjacency(g)
    pool = sample_edge_pool(g, None, 0)
    plus = score_existing_edges(g, A, es, plan)
    minus = score_candidate_edges(g, es, plan, pool)
    cfg = AugmentConfig(r1=0.1, r2=0.1)
    out = flip_edges(g, plus, minus, cfg, pool)
    old = set(g.edge_keys().tolist())
    new = set(out.edge_keys().tolist())
    removed, added = old - new, new - old
    assert len(removed) == budget(0.1, g.m)
    assert len(added) == budget(0.1, g.m)
    assert added <= set((pool[:, 0] * 20 + pool[:, 1]).tolist())
    # removed edges are exactly the top scores
    top = set(g.edge_keys()[np.argsort(-plus, kind="stable")[:len(removed)]].tolist())
    assert removed == top


def test_flip_ties_break_lexicographically():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    out = flip_edges(g, np.ones(4), np.zeros(0), AugmentConfig(r1=0.25, r2=0.0, weighted=False))
    assert out.edges.tolist() == [[0, 3], [1, 2], [2, 3]]


def test_flip_drop_budget_must_stay_below_m():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    with pytest.raises(PreconditionError):
        flip_edges(g, np.ones(2), np.zeros(0), AugmentConfig(r1=0.6, r2=0.0))


def test_rescale_weights_range():
    w = rescale_weights(np.array([-0.2, 0.0, 0.1, 0.5]))
    assert w.min() == pytest.approx(1e-3) and w.max() == 1.0
    assert np.all(rescale_weights(np.array([0.3, 0.3])) == 1.0)


def test_mask_examples():
    X = np.random.default_rng(0).normal(size=(5, 10))
    assert np.array_equal(mask_features(X, 0.0, 1), X)
    M = mask_features(X, 0.5, 1)
    assert int(np.sum(~M.any(axis=0))) == 5
    with pytest.raises(PreconditionError):
        mask_features(X, 1.0, 1)


def test_masks_vary_with_seed():
    X = np.ones((3, 10))
    masks = {tuple(np.flatnonzero(~mask_features(X, 0.3, s).any(axis=0))) for s in range(20)}
    assert len(masks) > 1


# --- views ------------------------------------------------------------------------------

def test_views_identity_config_unweighted_equals_input():
    g = sbm_generate(40, 2, 0.3, 0.05, 4, seed=0)
    cfg = AugmentConfig(b0=2, band_size=4, pivot=1.0, r1=0, r2=0, mask_ratio=0, weighted=False)
    for v in make_views(g, cfg):
        assert v.topology.same_as(g)
        assert np.array_equal(v.features, g.X)


def test_views_weighted_within_floor_and_one(sbm200):
    for v in make_views(sbm200, AugmentConfig(seed=1)):
        w = v.topology.weights
        assert w.min() >= 1e-3 and w.max() <= 1.0
        assert v.topology.n == sbm200.n


def test_views_deterministic(sbm200):
    a = make_views(sbm200, AugmentConfig(seed=5))
    b = make_views(sbm200, AugmentConfig(seed=5))
    for u, v in zip(a, b):
        assert u.topology.same_as(v.topology) and np.array_equal(u.features, v.features)


def test_views_differ_between_sub_seeds(sbm200):
    differ = 0
    for s in range(10):
        a, b = make_views(sbm200, AugmentConfig(seed=s))
        differ += not np.array_equal(a.topology.edges, b.topology.edges)
    assert differ == 10


def test_random_views_budgets(sbm200):
    cfg = AugmentConfig(r1=0.1, r2=0.2, seed=2)
    for v in random_views(sbm200, cfg):
        old = set(sbm200.edge_keys().tolist())
        new = set(v.topology.edge_keys().tolist())
        assert len(old - new) == budget(0.1, sbm200.m)
        assert len(new - old) == budget(0.2, sbm200.m)
        assert np.all(v.topology.weights == 1.0)


def test_partial_eigensystem_views(sbm200):
    cfg = AugmentConfig(b0=5, band_size=10, seed=3)
    es = adjacency_eigensystem(sbm200, K=20)
    a, b = Augmenter(sbm200, es).views(cfg)
    full_a, _ = make_views(sbm200, cfg)
    assert abs(a.topology.m - full_a.topology.m) == 0
