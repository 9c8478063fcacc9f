import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clustersfm.graph import (
    GraphDisconnectedError,
    GraphError,
    balanced_partition,
    build_graph,
    connected_components,
    normalized_cut,
    peel_to_center,
    size_bounds,
    spanning_forest,
    spanning_tree,
    tree_height,
)


def random_connected_graph(rng: random.Random, n: int, p: float = 0.5, wmax: int = 20):
    nodes = list(range(n))
    edges = []
    # random spanning backbone keeps it connected
    order = nodes[:]
    rng.shuffle(order)
    for i in range(1, n):
        edges.append((order[i], order[rng.randrange(i)], rng.randint(0, wmax)))
    for a, b in itertools.combinations(nodes, 2):
        if rng.random() < p:
            edges.append((a, b, rng.randint(0, wmax)))
    return build_graph(edges, nodes=nodes)


def random_tree(rng: random.Random, n: int):
    return build_graph([(i, rng.randrange(i), 1.0) for i in range(1, n)], nodes=range(n))


def brute_force_tree_weights(g):
    """Total weight of every spanning tree, by enumerating edge subsets."""
    edges = g.edges
    n = len(g.nodes)
    totals = []
    for subset in itertools.combinations(edges, n - 1):
        if len(connected_components(build_graph([(a, b, w) for a, b, w, _ in subset], nodes=g.nodes))) == 1:
            totals.append(sum(w for _, _, w, _ in subset))
    return totals


# ----------------------------------------------------------------- build_graph


def test_build_graph_empty():
    g = build_graph([])
    assert g.nodes == frozenset() and g.edges == []


def test_build_graph_duplicate_keeps_larger():
    g = build_graph([(1, 2, 5), (2, 1, 3)])
    assert g.edges == [(1, 2, 5.0, None)]


def test_build_graph_triangle():
    g = build_graph([(1, 2, 5), (2, 3, 4), (1, 3, 9)])
    assert len(g.edges) == 3 and g.nodes == {1, 2, 3}


@pytest.mark.parametrize("bad", [[(1, 1, 2)], [(1, 2, -1)], [(1, 2, float("nan"))], [(1, 2, float("inf"))]])
def test_build_graph_rejects(bad):
    with pytest.raises(GraphError):
        build_graph(bad)


# ------------------------------------------------------------------ components


def test_components():
    assert connected_components(build_graph([(1, 2, 5), (2, 3, 4), (1, 3, 9)])) == [{1, 2, 3}]
    assert connected_components(build_graph([(1, 2, 1), (3, 4, 1)])) == [{1, 2}, {3, 4}]
    assert connected_components(build_graph([])) == []


# --------------------------------------------------------------- spanning tree

TRIANGLE = build_graph([(1, 2, 1), (2, 3, 2), (1, 3, 3)])


def test_spanning_tree_triangle():
    t = spanning_tree(TRIANGLE, "minimize")
    assert set(t.edge_map) == {(1, 2), (2, 3)} and t.total_weight() == 3
    t = spanning_tree(TRIANGLE, "maximize")
    assert set(t.edge_map) == {(2, 3), (1, 3)} and t.total_weight() == 5


def test_spanning_tree_of_tree_is_itself():
    g = build_graph([(1, 2, 4), (2, 3, 1), (2, 4, 7)])
    for obj in ("minimize", "maximize"):
        assert set(spanning_tree(g, obj).edge_map) == set(g.edge_map)


def test_spanning_tree_disconnected_names_components():
    with pytest.raises(GraphDisconnectedError) as exc:
        spanning_tree(build_graph([(1, 2, 1), (3, 4, 1)]))
    assert exc.value.components == [{1, 2}, {3, 4}]


def test_spanning_tree_ties_broken_by_node_pair():
    # all equal weights: Kruskal takes pairs in sorted order
    g = build_graph([(3, 4, 1), (1, 2, 1), (2, 3, 1), (1, 4, 1)])
    assert set(spanning_tree(g).edge_map) == {(1, 2), (1, 4), (2, 3)}
    assert set(spanning_tree(g, "maximize").edge_map) == {(1, 2), (1, 4), (2, 3)}


def test_spanning_tree_brute_force_oracle():
    rng = random.Random(1234)
    for _ in range(120):
        g = random_connected_graph(rng, rng.randint(2, 7))
        totals = brute_force_tree_weights(g)
        assert spanning_tree(g, "minimize").total_weight() == min(totals)
        assert spanning_tree(g, "maximize").total_weight() == max(totals)


def test_spanning_forest_per_component():
    g = build_graph([(1, 2, 3), (2, 3, 1), (1, 3, 2), (7, 8, 1)])
    forest = spanning_forest(g)
    assert [t.nodes for t in forest] == [{1, 2, 3}, {7, 8}]
    assert forest[0].total_weight() == 3


# ---------------------------------------------------------------- tree height


def test_tree_height_examples():
    path = build_graph([(1, 2, 1), (2, 3, 1)])
    assert tree_height(build_graph([], nodes=[5]), 5) == 0
    assert tree_height(path, 1) == 2
    assert tree_height(path, 2) == 1
    with pytest.raises(GraphError):
        tree_height(path, 9)


def test_peel_examples():
    path = build_graph([(1, 2, 1), (2, 3, 1)])
    assert peel_to_center(path) == ({2}, [{1, 3}])
    assert peel_to_center(build_graph([], nodes=[4])) == ({4}, [])
    star = build_graph([(0, i, 1) for i in range(1, 5)])
    assert peel_to_center(star)[0] == {0}
    assert peel_to_center(build_graph([(1, 2, 1)]))[0] == {1, 2}


def test_peel_matches_brute_force_heights():
    rng = random.Random(99)
    for _ in range(150):
        t = random_tree(rng, rng.randint(1, 12))
        heights = {r: tree_height(t, r) for r in t.nodes}
        best = min(heights.values())
        survivors, layers = peel_to_center(t)
        assert 1 <= len(survivors) <= 2
        assert {r for r, h in heights.items() if h == best} == survivors
        assert set().union(survivors, *layers) == t.nodes


# ----------------------------------------------------------------- partition


def two_cliques():
    edges = [(a, b, 10) for a, b in itertools.combinations(range(5), 2)]
    edges += [(a, b, 10) for a, b in itertools.combinations(range(5, 10), 2)]
    edges.append((4, 5, 1))
    return build_graph(edges)


def brute_force_bisection(g):
    adj = g.adjacency()
    nodes = set(g.nodes)
    lo, hi = size_bounds(len(nodes), 2)
    best = None
    first = min(nodes)
    for r in range(lo, hi + 1):
        for part in itertools.combinations(sorted(nodes), r):
            part = set(part)
            if first not in part or not lo <= len(nodes - part) <= hi:
                continue
            v = normalized_cut(adj, part, nodes)
            if best is None or v < best[0]:
                best = (v, part)
    return best


def test_partition_k1():
    g = two_cliques()
    assert balanced_partition(g, 1) == [set(g.nodes)]


def test_partition_two_cliques_matches_brute_force():
    g = two_cliques()
    parts = balanced_partition(g, 2)
    assert parts == [set(range(5)), set(range(5, 10))]
    assert brute_force_bisection(g)[1] == set(range(5))


def test_partition_two_components():
    g = build_graph([(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1)])
    assert balanced_partition(g, 2) == [{0, 1, 2}, {3, 4, 5}]


def test_partition_k_out_of_range():
    g = two_cliques()
    for k in (0, 11):
        with pytest.raises(GraphError):
            balanced_partition(g, k)


def test_partition_small_graphs_optimal():
    rng = random.Random(7)
    for _ in range(40):
        g = random_connected_graph(rng, rng.randint(4, 10), p=0.4)
        got = balanced_partition(g, 2)
        best = brute_force_bisection(g)
        assert math.isclose(normalized_cut(g.adjacency(), got[0], set(g.nodes)), best[0], abs_tol=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 80), k=st.integers(1, 8), seed=st.integers(0, 10_000), p=st.floats(0.02, 0.5))
def test_partition_is_balanced_cover(n, k, seed, p):
    k = min(k, n)
    rng = random.Random(seed)
    edges = [(a, b, rng.randint(1, 9)) for a, b in itertools.combinations(range(n), 2) if rng.random() < p]
    g = build_graph(edges, nodes=range(n))
    parts = balanced_partition(g, k)
    assert len(parts) == k
    assert all(parts)
    assert sum(len(p) for p in parts) == n and set().union(*parts) == set(range(n))
    lo, hi = size_bounds(n, k)
    assert all(lo <= len(p) <= hi for p in parts)
    assert balanced_partition(g, k) == parts
