import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clustersfm.clustering import (
    ClusteringParams,
    ClusterSet,
    cluster_images,
    collect_lost_edges,
    completeness,
    cut_images,
    expand_clusters,
    num_clusters,
)
from clustersfm.graph import build_graph, spanning_forest

from helpers import random_geometric_graph


def direct_eta(clusters, i):
    ci = clusters[i]
    return sum(len(ci & cj) for j, cj in enumerate(clusters) if j != i) / len(ci)


def path_graph(n):
    return build_graph([(i, i + 1, 1) for i in range(n - 1)])


# ---------------------------------------------------------------- cut_images


def test_num_clusters_floor():
    assert num_clusters(100, ClusteringParams(max_cluster_size=50)) == 2
    assert num_clusters(30, ClusteringParams(max_cluster_size=50)) == 1
    # 149 / 100 floors to 1, but one cluster of 149 would break the 130 cap
    assert num_clusters(149, ClusteringParams(max_cluster_size=100)) == 2


def test_cut_two_clusters():
    cs = cut_images(path_graph(100), ClusteringParams(max_cluster_size=50))
    assert len(cs) == 2
    assert cs.clusters[0] | cs.clusters[1] == set(range(100))
    assert not cs.clusters[0] & cs.clusters[1]


def test_small_graph_single_cluster_no_expansion():
    g = path_graph(30)
    cs = cluster_images(g, ClusteringParams(max_cluster_size=50))
    assert cs.clusters == [frozenset(range(30))]
    assert cs.stop_reason == "cut"


def test_cut_two_cliques():
    edges = [(a, b, 10) for a, b in itertools.combinations(range(5), 2)]
    edges += [(a, b, 10) for a, b in itertools.combinations(range(5, 10), 2)]
    edges.append((4, 5, 1))
    cs = cut_images(build_graph(edges), ClusteringParams(max_cluster_size=5))
    assert cs.clusters == [frozenset(range(5)), frozenset(range(5, 10))]


# -------------------------------------------------------------- completeness


def test_completeness_examples():
    cs = ClusterSet([frozenset({1, 2, 3, 4}), frozenset({3, 4, 5, 6})])
    assert completeness(cs, 0) == 0.5
    assert completeness(ClusterSet([frozenset({1}), frozenset({2})]), 0) == 0.0
    assert completeness(ClusterSet([frozenset({1, 2}), frozenset({1, 2, 3})]), 0) == 1.0


# ---------------------------------------------------------------- lost edges


def test_lost_edges_examples():
    cs = ClusterSet([frozenset({1, 2, 3}), frozenset({7, 8})])
    assert collect_lost_edges(build_graph([(1, 2, 1), (7, 8, 1)]), cs) == {}
    assert collect_lost_edges(build_graph([(3, 7, 12), (1, 2, 1)]), cs) == {(0, 1): [(3, 7, 12.0)]}
    lost = collect_lost_edges(build_graph([(1, 7, 5), (2, 8, 9), (3, 8, 2)]), cs)
    assert [w for _, _, w in lost[(0, 1)]] == [9, 5, 2]


def test_lost_edges_each_cross_edge_once():
    g = random_geometric_graph(200, seed=3)
    cs = cut_images(g, ClusteringParams(max_cluster_size=40))
    lost = collect_lost_edges(g, cs)
    owner = {i: k for k, c in enumerate(cs.clusters) for i in c}
    cross = {(a, b) for a, b, _, _ in g.edges if owner[a] != owner[b]}
    listed = [tuple(sorted((a, b))) for edges in lost.values() for a, b, _ in edges]
    assert len(listed) == len(set(listed)) and set(listed) == cross
    for (k1, k2), edges in lost.items():
        assert k1 < k2
        assert all(owner[a] == k1 and owner[b] == k2 for a, b, _ in edges)


def test_lost_edges_rejects_overlapping_clusters():
    with pytest.raises(ValueError):
        collect_lost_edges(build_graph([(1, 2, 1)]), ClusterSet([frozenset({1, 2}), frozenset({2})]))


# ----------------------------------------------------------------- expansion


def test_expand_top_o_max_edges():
    a_side, b_side = list(range(10)), list(range(10, 20))
    cs = ClusterSet([frozenset(a_side), frozenset(b_side)])
    lost = {(0, 1): [(0, 10, 9.0), (1, 11, 8.0), (2, 12, 7.0), (3, 13, 3.0), (4, 14, 1.0)]}
    # completeness 0.3 is met exactly by three edges, so the random phase adds nothing
    params = ClusteringParams(max_cluster_size=10, max_overlap=3, completeness=0.3)
    out = expand_clusters(cs, lost, params)
    assert out.clusters[0] == frozenset(a_side) | {10, 11, 12}
    assert out.clusters[1] == frozenset(b_side) | {0, 1, 2}
    assert out.stop_reason == "satisfied"


def test_expand_follows_max_spanning_tree_first():
    # A-B has 3 lost edges, B-C has 2, A-C has 1: the tree is A-B, B-C
    A, B, C = range(0, 10), range(10, 20), range(20, 30)
    cs = ClusterSet([frozenset(A), frozenset(B), frozenset(C)])
    lost = {
        (0, 1): [(0, 10, 5.0), (1, 11, 5.0), (2, 12, 5.0)],
        (0, 2): [(5, 25, 9.0)],
        (1, 2): [(13, 23, 4.0), (14, 24, 4.0)],
    }
    params = ClusteringParams(max_cluster_size=10, completeness=0.01, max_overlap=10)
    out = expand_clusters(cs, lost, params)
    assert out.clusters[0] & out.clusters[1] and out.clusters[1] & out.clusters[2]
    assert not out.clusters[0] & out.clusters[2]
    # a demanding threshold lets the random phase use the non-tree pair too
    out = expand_clusters(cs, lost, ClusteringParams(max_cluster_size=10, completeness=1.0, size_slack=1.0))
    assert {25} <= out.clusters[0] and {5} <= out.clusters[2]


def test_expand_empty_lost_map():
    cs = ClusterSet([frozenset({0, 1}), frozenset({2, 3})])
    out = expand_clusters(cs, {}, ClusteringParams(max_cluster_size=2))
    assert out.clusters == cs.clusters
    assert out.unsatisfied == [0, 1] and out.stop_reason == "exhausted"


def test_expand_respects_size_cap():
    A, B = range(10), range(10, 20)
    cs = ClusterSet([frozenset(A), frozenset(B)])
    lost = {(0, 1): [(a, b, 1.0) for a, b in zip(A, B)]}
    params = ClusteringParams(max_cluster_size=10, size_slack=0.2, completeness=1.0)
    out = expand_clusters(cs, lost, params)
    assert all(len(c) <= 12 for c in out.clusters)
    assert out.unsatisfied == [0, 1]


def test_cluster_images_random_geometric_100():
    g = random_geometric_graph(100, seed=11)
    params = ClusteringParams(max_cluster_size=30, completeness=0.7)
    cs = cluster_images(g, params)
    for i in range(len(cs)):
        assert cs.completeness(i) >= 0.7 or i in cs.unsatisfied


def test_adjacent_clusters_share_images():
    g = random_geometric_graph(300, seed=5)
    params = ClusteringParams(max_cluster_size=60)
    cut = cut_images(g, params)
    lost = collect_lost_edges(g, cut)
    out = expand_clusters(cut, lost, params)
    tree_graph = build_graph([(k1, k2, len(e)) for (k1, k2), e in lost.items()], nodes=range(len(cut)))
    for t in spanning_forest(tree_graph, "maximize"):
        for k1, k2, w, _ in t.edges:
            if w >= 1:
                assert out.clusters[k1] & out.clusters[k2]


@settings(max_examples=25, deadline=None)
@given(n=st.integers(20, 400), smax=st.integers(8, 80), seed=st.integers(0, 1000),
       tau=st.floats(0.1, 1.0))
def test_expansion_invariants(n, smax, seed, tau):
    g = random_geometric_graph(n, seed)
    params = ClusteringParams(max_cluster_size=smax, completeness=tau, seed=seed)
    cut = cut_images(g, params)
    if len(cut) == 1:
        return
    lost = collect_lost_edges(g, cut)
    out = expand_clusters(cut, lost, params)
    # expansion only adds, never past the cap, and keeps full coverage
    assert all(before <= after for before, after in zip(cut.clusters, out.clusters))
    assert all(len(c) <= params.size_cap for c in out.clusters)
    assert out.images() == set(g.nodes)
    assert out.random_rounds <= params.rounds_for(len(cut))
    for i in range(len(out)):
        eta = direct_eta(out.clusters, i)
        assert out.completeness(i) == eta
        assert (eta < tau) == (i in out.unsatisfied)
    # same seed, same result
    assert expand_clusters(cut, lost, params).clusters == out.clusters
    # re-running on the output adds nothing unless the round budget cut it short
    if out.stop_reason != "budget":
        again = expand_clusters(out, lost, params)
        assert again.clusters == out.clusters
