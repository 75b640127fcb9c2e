import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annscope.analysis import (
    AnalysisError,
    NeighborhoodSubgraph,
    SccReport,
    clustering_report,
    estimate_entry_probability,
    global_clustering,
    local_clustering,
    neighborhood_subgraph,
    pearson,
    phase_split,
    premise_holds,
    recall,
    scc_decompose,
    verify_theorem1,
)
from annscope.dataset import NeighborList, VectorDataset, brute_force_knn
from annscope.graph import EdgeStrategy, build_graph, graph_from_edges
from annscope.search import SearchParams, search

from conftest import random_dataset


def reachability_sccs(n, edges):
    """Partition by mutual reachability (Floyd-Warshall closure)."""
    reach = np.eye(n, dtype=bool)
    for u, w in edges:
        reach[u, w] = True
    for m in range(n):
        reach |= reach[:, m:m + 1] & reach[m:m + 1, :]
    mutual = reach & reach.T
    parts = {tuple(np.nonzero(mutual[v])[0].tolist()) for v in range(n)}
    return sorted(parts, key=lambda c: (-len(c), c[0]))


def whole_subgraph(n, edges):
    members = NeighborList(np.arange(n), np.zeros(n))
    return NeighborhoodSubgraph(members, [tuple(map(int, e)) for e in edges], n)


# ---------------------------------------------------------------- clustering

def degree_four_fixture():
    # centre 0 with neighbors 1..4; two links among them
    return graph_from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (3, 4)])


def test_degree_four_vertex_is_one_third(kernels):
    g = degree_four_fixture()
    assert local_clustering(g, 0) == 1 / 3
    assert clustering_report(g, kernels).per_vertex[0] == 1 / 3


def test_complete_graph_is_one(kernels):
    g = graph_from_edges(5, [(a, b) for a in range(5) for b in range(5)])
    assert local_clustering(g, 2) == 1.0
    assert clustering_report(g, kernels).global_cc == 1.0


def test_matching_is_zero(kernels):
    g = graph_from_edges(6, [(0, 1), (2, 3), (4, 5)])
    assert clustering_report(g, kernels).global_cc == 0.0


def test_star_is_zero(kernels):
    g = graph_from_edges(5, [(0, i) for i in range(1, 5)])
    rep = clustering_report(g, kernels)
    assert rep.per_vertex.tolist() == [0.0] * 5
    assert local_clustering(g, 0) == 0.0 and local_clustering(g, 3) == 0.0


def test_one_direction_counts_as_link():
    # neighbor link given only as an in-edge still counts
    g = graph_from_edges(3, [(0, 1), (2, 0), (2, 1)])
    assert local_clustering(g, 0) == 1.0


def test_report_matches_independent_local(kernels, rng):
    for strategy in ("directed", "mrng"):
        data = random_dataset(rng, 150, 3)
        g = build_graph(data, K=6, strategy=strategy)
        rep = clustering_report(g, kernels)
        want = [local_clustering(g, v) for v in range(g.n)]
        assert np.allclose(rep.per_vertex, want, rtol=0, atol=1e-15)
        assert math.isclose(rep.global_cc, math.fsum(want) / g.n, rel_tol=1e-12)


def test_symmetrization_invariance(kernels, rng):
    data = random_dataset(rng, 100, 4)
    g = build_graph(data, K=5)
    a = clustering_report(g, kernels).per_vertex
    b = clustering_report(g.symmetrized(), kernels).per_vertex
    assert np.array_equal(a, b)


def test_local_clustering_range_error():
    with pytest.raises(AnalysisError):
        local_clustering(degree_four_fixture(), 5)


def test_global_clustering_helper():
    assert global_clustering(degree_four_fixture()) == pytest.approx(np.mean([1 / 3, 1, 1, 1, 1]))


# ------------------------------------------------------------------ subgraph

def test_subgraph_k1(rng):
    data = random_dataset(rng, 30, 2)
    g = build_graph(data, K=4)
    sub = neighborhood_subgraph(g, data, rng.random(2), 1)
    assert sub.k == 1 and sub.edges == []


def test_subgraph_whole_complete(rng):
    data = random_dataset(rng, 10, 2)
    g = build_graph(data, K=9)
    sub = neighborhood_subgraph(g, data, rng.random(2), 10)
    assert sorted(sub.edges) == sorted(map(tuple, g.edges().tolist()))


def test_subgraph_matches_filter(rng):
    for _ in range(20):
        data = random_dataset(rng, 80, 3)
        g = build_graph(data, K=int(rng.integers(1, 8)), strategy="directed")
        q = rng.random(3)
        k = int(rng.integers(1, 20))
        sub = neighborhood_subgraph(g, data, q, k)
        members = set(brute_force_knn(data, q, k).ids.tolist())
        want = [(u, w) for u, w in g.edges().tolist() if u in members and w in members]
        assert sorted(sub.edges) == sorted(want)


# ----------------------------------------------------------------------- SCC

def test_three_cycle():
    rep = scc_decompose(whole_subgraph(3, [(0, 1), (1, 2), (2, 0)]))
    assert rep.components == [[0, 1, 2]]


def test_triangle_with_outliers():
    # o1..o3 mutually reachable; o4 isolated; o5 reached one-way
    edges = [(0, 1), (1, 2), (2, 0), (1, 0), (2, 4)]
    rep = scc_decompose(whole_subgraph(5, edges))
    assert rep.sizes == [3, 1, 1]
    assert rep.max_component == [0, 1, 2]
    assert rep.top(3) == [3, 1, 1] and rep.top(5) == [3, 1, 1, 0, 0]
    assert rep.ratios == [0.6, 0.2, 0.2]


def test_ties_ordered_by_smallest_id():
    rep = scc_decompose(whole_subgraph(4, [(3, 2), (2, 3), (0, 1), (1, 0)]))
    assert rep.components == [[0, 1], [2, 3]]


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 64), st.sampled_from([0.05, 0.15, 0.4]), st.integers(0, 2**32 - 1))
def test_scc_matches_reachability(n, p, seed):
    r = np.random.default_rng(seed)
    edges = np.argwhere(r.random((n, n)) < p)
    edges = edges[edges[:, 0] != edges[:, 1]]
    rep = scc_decompose(whole_subgraph(n, edges))
    assert [tuple(c) for c in rep.components] == reachability_sccs(n, edges)


def test_complete_undirected_single_component(rng):
    data = random_dataset(rng, 30, 3)
    g = build_graph(data, K=29, strategy="undirected")
    for _ in range(5):
        rep = scc_decompose(neighborhood_subgraph(g, data, rng.random(3), 7))
        assert rep.sizes == [7]


def test_deep_chain_has_no_recursion_limit():
    n = 5000
    edges = [(i, i + 1) for i in range(n - 1)] + [(n - 1, 0)]
    assert scc_decompose(whole_subgraph(n, edges)).sizes == [n]


# -------------------------------------------------------------------- phases

def phase_instance():
    # points on a line, query at 0; truth = {0, 1, 2}, core = {0, 1}
    pts = np.array([[0.0], [1.0], [2.0], [10.0], [11.0]], dtype=np.float32)
    g = graph_from_edges(5, [(4, 3), (3, 2), (2, 0), (0, 1), (1, 0), (4, 2)])
    return VectorDataset(pts), g


def test_phase_split_from_outside():
    data, g = phase_instance()
    truth = brute_force_knn(data, [0.0], 3)
    scc = scc_decompose(neighborhood_subgraph(g, data, [0.0], 3, truth))
    assert scc.max_component == [0, 1]
    t = search(g, data, [0.0], SearchParams(k=3, L=3, entry=4))
    assert t.pop_ids.tolist() == [4, 2, 0, 1]
    st_ = phase_split(t, scc, truth)
    assert (st_.hops_phase1, st_.hops_phase2) == (2, 2)
    assert st_.entered and st_.scc_fraction_visited == 1.0
    # vertex 2 is a true neighbor outside the core but popped before the boundary
    assert st_.extra_true_nn == 0
    assert st_.hop_count == t.hop_count


def test_phase_split_entry_in_core():
    data, g = phase_instance()
    truth = brute_force_knn(data, [0.0], 3)
    scc = scc_decompose(neighborhood_subgraph(g, data, [0.0], 3, truth))
    t = search(g, data, [0.0], SearchParams(k=3, L=3, entry=1))
    s = phase_split(t, scc, truth)
    assert s.hops_phase1 == 0 and s.hops_phase2 == t.hop_count


def test_phase_split_never_enters():
    data, g = phase_instance()
    g = graph_from_edges(5, [(4, 3), (3, 4), (0, 1), (1, 0)])
    truth = brute_force_knn(data, [0.0], 3)
    scc = scc_decompose(neighborhood_subgraph(g, data, [0.0], 3, truth))
    t = search(g, data, [0.0], SearchParams(k=3, L=3, entry=4))
    s = phase_split(t, scc, truth)
    assert not s.entered and s.scc_fraction_visited == 0.0 and s.hops_phase2 == 0
    assert estimate_entry_probability([t], [scc]) == 0.0


def test_phase_split_counts_extra_after_boundary():
    data, g = phase_instance()
    g = graph_from_edges(5, [(4, 0), (0, 1), (1, 0), (1, 2)])
    truth = brute_force_knn(data, [0.0], 3)
    scc = scc_decompose(neighborhood_subgraph(g, data, [0.0], 3, truth))
    t = search(g, data, [0.0], SearchParams(k=3, L=3, entry=4))
    s = phase_split(t, scc, truth)
    assert t.pop_ids.tolist() == [4, 0, 1, 2]
    assert s.extra_true_nn == 1


def test_phase_split_inconsistent_inputs():
    data, g = phase_instance()
    truth = brute_force_knn(data, [0.0], 3)
    scc = scc_decompose(neighborhood_subgraph(g, data, [0.0], 3, truth))
    t = search(g, data, [0.0], SearchParams(k=3, L=3, entry=4))
    with pytest.raises(AnalysisError):
        phase_split(t, scc, brute_force_knn(data, [0.0], 2))
    small = SccReport(scc.k, scc.components, n=3)
    with pytest.raises(AnalysisError):
        phase_split(t, small, truth)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_phase_conservation(seed):
    r = np.random.default_rng(seed)
    data = random_dataset(r, 80, 3)
    g = build_graph(data, K=int(r.integers(1, 8)), strategy="directed")
    q = r.random(3)
    k = int(r.integers(1, 10))
    truth = brute_force_knn(data, q, k)
    scc = scc_decompose(neighborhood_subgraph(g, data, q, k, truth))
    t = search(g, data, q, SearchParams(k=k, L=k + int(r.integers(0, 5)), seed=seed % 97))
    s = phase_split(t, scc, truth)
    assert s.hops_phase1 + s.hops_phase2 == t.hop_count
    assert 0.0 <= s.scc_fraction_visited <= 1.0


def test_entry_probability_recount(rng):
    data = random_dataset(rng, 300, 4)
    g = build_graph(data, K=3)
    traces, sccs, manual = [], [], 0
    for i in range(30):
        q = rng.random(4)
        truth = brute_force_knn(data, q, 10)
        scc = scc_decompose(neighborhood_subgraph(g, data, q, 10, truth))
        t = search(g, data, q, SearchParams(k=10, seed=1), query_index=i)
        manual += phase_split(t, scc, truth).entered
        traces.append(t)
        sccs.append(scc)
    assert estimate_entry_probability(traces, sccs) == manual / 30
    with pytest.raises(AnalysisError):
        estimate_entry_probability(traces, sccs[:-1])


# ---------------------------------------------------------------- recall etc.

def test_recall_cases():
    t = NeighborList(np.arange(10), np.zeros(10))
    assert recall(t, t) == 1.0
    assert recall(NeighborList(np.arange(10, 20), np.zeros(10)), t) == 0.0
    assert recall(NeighborList(np.arange(5, 15), np.zeros(10)), t) == 0.5


def test_pearson_cases():
    xs = [1, 2, 3, 4, 5, 6]
    assert pearson(xs, [2 * x + 1 for x in xs]) == pytest.approx(1.0, abs=1e-15)
    assert pearson(xs, [-x for x in xs]) == pytest.approx(-1.0, abs=1e-15)
    assert abs(pearson(xs, [2, 1, 4, 3, 6, 5]) - 29 / 35) <= 1e-12
    with pytest.raises(AnalysisError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(AnalysisError):
        pearson([1], [2])
    with pytest.raises(AnalysisError):
        pearson([1, 2], [1, 2, 3])


# ----------------------------------------------------------- core traversal

def planted_five_cycle():
    r = np.random.default_rng(3)
    q = np.zeros(3)
    near = 0.01 * r.standard_normal((5, 3))
    far = 5 + r.random((40, 3))
    pts = np.vstack([near, far]).astype(np.float32)
    edges = [(i, (i + 1) % 5) for i in range(5)]
    edges += [(5 + j, int(r.integers(45))) for j in range(40)] + [(2, 7), (9, 3)]
    return VectorDataset(pts), graph_from_edges(45, edges), q


def test_planted_cycle_visits_all_from_any_entry(kernels):
    data, g, q = planted_five_cycle()
    truth = brute_force_knn(data, q, 5)
    scc = scc_decompose(neighborhood_subgraph(g, data, q, 5, truth))
    assert scc.max_component == [0, 1, 2, 3, 4]
    assert premise_holds(g, data, q, scc.max_component)
    for entry in range(5):
        t = search(g, data, q, SearchParams(k=5, L=5, entry=entry), kernels=kernels)
        assert set(range(5)) <= set(t.pop_ids.tolist())
        assert phase_split(t, scc, truth).scc_fraction_visited == 1.0


def test_premise_detects_close_border():
    data, g, q = planted_five_cycle()
    # an in-edge from a vertex nearer than the farthest core member breaks it
    pts = data.vectors.copy()
    pts[9] = 0.0
    assert not premise_holds(g, VectorDataset(pts), q, [0, 1, 2, 3, 4])
    assert not premise_holds(g, data, q, [])


def test_verify_theorem1_small_batch():
    rep = verify_theorem1(n_trials=20, seed=11)
    assert rep.n_passed == 20 and rep.all_passed and rep.counterexamples() == []
    assert {t.mode for t in rep.trials} == {"cycle", "build"}
    assert all(t.premise for t in rep.trials)


def test_singleton_core_trivially_passes():
    data = VectorDataset(np.array([[0.0], [5.0]], dtype=np.float32))
    g = graph_from_edges(2, [(1, 0)], EdgeStrategy.DIRECTED)
    scc = scc_decompose(neighborhood_subgraph(g, data, [0.0], 1))
    assert scc.max_component == [0]
    assert premise_holds(g, data, [0.0], [0])
    t = search(g, data, [0.0], SearchParams(k=1, entry=0))
    assert 0 in t.pop_ids.tolist()

