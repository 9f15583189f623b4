import itertools
import math
import random

import numpy as np
import pytest
import scipy.sparse as sp

from obfugraph.frontend import parse
from obfugraph.graph import build_graph
from obfugraph.partition import (
    DimensionError, Partition, adjacency, assignment_matrix, balance_bound, coarsen,
    edge_cut, partition, partition_edges,
)


def _random_graph(rng, n_max=500):
    n = rng.randint(1, n_max)
    edges = [(rng.randrange(n), rng.randrange(n)) for _ in range(rng.randint(0, 3 * n))]
    return n, edges


def _random_balanced(rng, n, m):
    perm = list(range(n))
    rng.shuffle(perm)
    assign = [0] * n
    for rank, node in enumerate(perm):
        assign[node] = rank % m
    return assign


def test_path_of_four_matches_exhaustive_optimum():
    edges = [(0, 1), (1, 2), (2, 3)]
    bound = balance_bound(4, 2)
    best = min(edge_cut(4, edges, a) for a in itertools.product(range(2), repeat=4)
               if 0 < sum(a) < 4 and max(a.count(0), a.count(1)) <= bound)
    assert best == 1
    p = partition_edges(4, edges, 2, seed=0)
    assert p.edge_cut == 1
    groups = sorted(sorted(np.flatnonzero(p.assign == c).tolist()) for c in range(2))
    assert groups == [[0, 1], [2, 3]]


def test_more_clusters_than_nodes():
    p = partition_edges(3, [(0, 1), (1, 2)], m=8)
    assert p.m == 3 and sorted(p.sizes.tolist()) == [1, 1, 1]
    assert p.edge_cut == 2


def test_disjoint_cliques_separate():
    clique = [(i, j) for i in range(10) for j in range(i + 1, 10)]
    edges = clique + [(i + 10, j + 10) for i, j in clique]
    for seed in range(5):
        assert partition_edges(20, edges, 2, seed).edge_cut == 0


def test_balance_over_random_graphs():
    rng = random.Random(2024)
    for trial in range(200):
        n, edges = _random_graph(rng)
        m = rng.choice([2, 4, 8])
        p = partition_edges(n, edges, m, seed=trial)
        assert p.sizes.sum() == n and p.sizes.min() >= 1
        assert p.sizes.max() <= math.ceil(1.1 * n / p.m - 1e-9)
        assert p.edge_cut == edge_cut(n, edges, p.assign.tolist())
        assert ((0 <= p.assign) & (p.assign < p.m)).all()


def test_beats_random_balanced_assignment():
    rng = random.Random(99)
    ours, baseline = [], []
    for trial in range(50):
        n, edges = _random_graph(rng)
        m = rng.choice([2, 4, 8])
        p = partition_edges(n, edges, m, seed=trial)
        ours.append(p.edge_cut)
        baseline.append(edge_cut(n, edges, _random_balanced(rng, n, p.m)))
    assert np.mean(ours) < np.mean(baseline)


def test_fixed_seed_is_deterministic():
    rng = random.Random(5)
    n, edges = _random_graph(rng)
    a = partition_edges(n, edges, 8, seed=17)
    b = partition_edges(n, edges, 8, seed=17)
    assert np.array_equal(a.assign, b.assign) and a.edge_cut == b.edge_cut


def test_partition_code_graph():
    g = build_graph(parse("function f(a){ if (a) { return a + 1; } return 0; } f(2); f(3);"))
    p = partition(g, m=4, seed=1)
    assert p.sizes.sum() == g.n and p.m == 4
    back = Partition.from_json(p.to_json())
    assert np.array_equal(back.assign, p.assign) and back.edge_cut == p.edge_cut


def test_assignment_matrix_examples():
    p = Partition(2, np.array([0, 0, 1, 1]), np.array([2, 2]), 1, 0)
    C = assignment_matrix(p)
    assert np.array_equal(C[C != 0], np.full(4, 0.5))
    assert np.allclose(C.sum(0), 1.0, atol=1e-12, rtol=0)
    perm = Partition(3, np.array([2, 0, 1]), np.array([1, 1, 1]), 0, 0)
    P = assignment_matrix(perm)
    assert np.array_equal(P @ P.T, np.eye(3))
    assert np.array_equal(assignment_matrix(p, sparse=True).toarray(), C)


def test_coarsen_examples():
    p = Partition(2, np.array([0, 0, 1, 1]), np.array([2, 2]), 1, 0)
    C = assignment_matrix(p)
    X = np.array([[1.0], [3.0], [5.0], [7.0]])
    A = adjacency(4, np.array([[0, 1], [1, 2], [2, 3]]), sparse=False)
    Xp, Ap = coarsen(X, A, C)
    assert np.array_equal(Xp, [[2.0], [6.0]])
    assert np.allclose(Ap, [[0.5, 0.25], [0.25, 0.5]], atol=1e-15, rtol=0)


def test_coarsen_random_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(20):
        B = rng.random((20, 20))
        A = B + B.T
        assign = rng.integers(0, 4, 20)
        assign[:4] = np.arange(4)
        p = Partition(4, assign, np.bincount(assign, minlength=4), 0, 0)
        C = assignment_matrix(p)
        _, Ap = coarsen(rng.random((20, 3)), A, C)
        assert np.max(np.abs(Ap - Ap.T)) <= 1e-12
        _, Ap_sparse = coarsen(rng.random((20, 3)), sp.csr_matrix(A), assignment_matrix(p, sparse=True))
        assert np.allclose(Ap_sparse, Ap, atol=1e-12, rtol=0)


def test_coarsen_dimension_error():
    C = np.ones((4, 2))
    with pytest.raises(DimensionError):
        coarsen(np.ones((3, 2)), np.ones((4, 4)), C)
    with pytest.raises(DimensionError):
        coarsen(np.ones((4, 2)), np.ones((3, 3)), C)


def test_refinement_never_hurts_initial_growth():
    # the final cut must not exceed the cut of the projected initial partition on a
    # graph small enough to skip coarsening (so the comparison is like for like)
    from obfugraph.partition import _Graph, _grow, _refine
    rng = random.Random(4)
    for trial in range(30):
        n = rng.randint(10, 30)
        edges = [(rng.randrange(n), rng.randrange(n)) for _ in range(2 * n)]
        g = _Graph.from_edges(n, edges)
        part = _grow(g, 4, random.Random(trial))
        before = edge_cut(n, edges, part)
        _refine(g, part, 4, n)
        assert edge_cut(n, edges, part) <= before
