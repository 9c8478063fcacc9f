"""Weighted undirected graphs, spanning trees, balanced partitioning and tree centers."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

Edge = tuple[int, int, float, Hashable]

# Exhaustive bisection is used at or below this many nodes.
EXHAUSTIVE_LIMIT = 12
IMBALANCE = 0.2


class GraphError(ValueError):
    pass


class GraphDisconnectedError(GraphError):
    def __init__(self, components: list[set[int]]):
        self.components = components
        desc = "; ".join(str(sorted(c)) for c in components)
        super().__init__(f"graph is disconnected into {len(components)} components: {desc}")


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


class UnionFind:
    def __init__(self, items: Iterable[int] = ()):
        self.parent: dict[int, int] = {x: x for x in items}
        self.rank: dict[int, int] = {x: 0 for x in self.parent}

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph with at most one weighted edge per node pair.

    Edges are stored keyed by the sorted node pair; the payload is an opaque tag
    carried alongside the weight (used for per-edge data such as transforms).
    """

    nodes: frozenset[int] = frozenset()
    edge_map: dict[tuple[int, int], tuple[float, Hashable]] = field(default_factory=dict)

    @property
    def edges(self) -> list[Edge]:
        return [(a, b, w, p) for (a, b), (w, p) in sorted(self.edge_map.items())]

    def __len__(self) -> int:
        return len(self.nodes)

    def weight(self, a: int, b: int) -> float:
        return self.edge_map[_key(a, b)][0]

    def payload(self, a: int, b: int) -> Hashable:
        return self.edge_map[_key(a, b)][1]

    def has_edge(self, a: int, b: int) -> bool:
        return _key(a, b) in self.edge_map

    def adjacency(self) -> dict[int, dict[int, float]]:
        adj: dict[int, dict[int, float]] = {n: {} for n in self.nodes}
        for (a, b), (w, _) in self.edge_map.items():
            adj[a][b] = w
            adj[b][a] = w
        return adj

    def subgraph(self, nodes: Iterable[int]) -> "WeightedGraph":
        keep = frozenset(nodes)
        emap = {k: v for k, v in self.edge_map.items() if k[0] in keep and k[1] in keep}
        return WeightedGraph(keep, emap)

    def total_weight(self) -> float:
        return sum(w for w, _ in self.edge_map.values())


# A spanning tree uses the same representation; the alias documents intent.
Tree = WeightedGraph


def build_graph(edge_list: Iterable[Sequence], nodes: Iterable[int] = ()) -> WeightedGraph:
    """Build a graph from ``(a, b, weight[, payload])`` tuples.

    Duplicate pairs keep the larger weight together with its payload. Extra
    ``nodes`` may be given to include isolated vertices.
    """
    node_set = set(nodes)
    emap: dict[tuple[int, int], tuple[float, Hashable]] = {}
    for item in edge_list:
        if len(item) == 3:
            a, b, w = item
            p = None
        else:
            a, b, w, p = item
        a, b = int(a), int(b)
        w = float(w)
        if a == b:
            raise GraphError(f"self-loop on node {a}")
        if not math.isfinite(w) or w < 0:
            raise GraphError(f"edge ({a}, {b}) has invalid weight {w}")
        node_set.update((a, b))
        k = _key(a, b)
        if k not in emap or w > emap[k][0]:
            emap[k] = (w, p)
    return WeightedGraph(frozenset(node_set), emap)


def connected_components(g: WeightedGraph) -> list[set[int]]:
    uf = UnionFind(g.nodes)
    for a, b in g.edge_map:
        uf.union(a, b)
    groups: dict[int, set[int]] = {}
    for n in g.nodes:
        groups.setdefault(uf.find(n), set()).add(n)
    return sorted(groups.values(), key=min)


def spanning_tree(g: WeightedGraph, objective: str = "minimize") -> Tree:
    """Kruskal spanning tree of a connected graph.

    Edges are visited by weight (ascending for ``"minimize"``, descending for
    ``"maximize"``) with ties broken by the sorted node pair.
    """
    if objective not in ("minimize", "maximize"):
        raise GraphError(f"unknown objective {objective!r}")
    if not g.nodes:
        raise GraphError("spanning tree of an empty graph")
    comps = connected_components(g)
    if len(comps) > 1:
        raise GraphDisconnectedError(comps)

    ordered = sorted(g.edge_map.items())
    ordered.sort(key=lambda kv: kv[1][0], reverse=objective == "maximize")
    uf = UnionFind(g.nodes)
    emap = {}
    for (a, b), wp in ordered:
        if uf.union(a, b):
            emap[(a, b)] = wp
            if len(emap) == len(g.nodes) - 1:
                break
    return WeightedGraph(g.nodes, emap)


def spanning_forest(g: WeightedGraph, objective: str = "minimize") -> list[Tree]:
    """One spanning tree per connected component, ordered by smallest node."""
    return [spanning_tree(g.subgraph(c), objective) for c in connected_components(g)]


def tree_height(t: Tree, root: int) -> int:
    if root not in t.nodes:
        raise GraphError(f"root {root} is not in the tree")
    adj = t.adjacency()
    depth = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in depth:
                depth[v] = depth[u] + 1
                queue.append(v)
    return max(depth.values())


def peel_to_center(t: Tree) -> tuple[set[int], list[set[int]]]:
    """Strip leaves layer by layer until one or two nodes remain.

    Returns the surviving nodes (the roots of minimum-height rootings) and the
    removed leaf layers in order.
    """
    if not t.nodes:
        raise GraphError("cannot peel an empty tree")
    adj = {n: set(nb) for n, nb in t.adjacency().items()}
    remaining = set(adj)
    layers: list[set[int]] = []
    while len(remaining) > 2:
        leaves = {n for n in remaining if len(adj[n]) <= 1}
        layers.append(leaves)
        for leaf in leaves:
            for nb in adj[leaf]:
                adj[nb].discard(leaf)
            adj[leaf].clear()
        remaining -= leaves
    return remaining, layers


# ---------------------------------------------------------------------------
# Balanced partitioning
# ---------------------------------------------------------------------------


def size_bounds(n: int, k: int, imbalance: float = IMBALANCE) -> tuple[int, int]:
    """Allowed part sizes when splitting ``n`` nodes into ``k`` parts."""
    lo = max(1, math.ceil(math.floor(n / k) * (1 - imbalance) - 1e-9))
    hi = max(lo, math.floor(math.ceil(n / k) * (1 + imbalance) + 1e-9))
    return lo, hi


def normalized_cut(adj: dict[int, dict[int, float]], part: set[int], nodes: set[int]) -> float:
    """Two-way normalized cut of ``part`` against ``nodes - part`` (restricted to ``nodes``)."""
    cut = vol_a = vol_b = 0.0
    for u in nodes:
        for v, w in adj[u].items():
            if v not in nodes:
                continue
            if u in part:
                vol_a += w
                if v not in part:
                    cut += w
            else:
                vol_b += w
    return _ncut_value(cut, vol_a, vol_b)


def _ncut_value(cut: float, vol_a: float, vol_b: float) -> float:
    if cut <= 0:
        return 0.0
    if vol_a <= 0 or vol_b <= 0:
        return math.inf
    return cut / vol_a + cut / vol_b


def balanced_partition(g: WeightedGraph, k: int, imbalance: float = IMBALANCE,
                       max_size: int | None = None) -> list[set[int]]:
    """Split ``g`` into ``k`` disjoint, similarly sized parts with small normalized cut.

    Recursive bisection. Each bisection is exhaustive for small node sets and
    otherwise seeded from a BFS ordering and refined by greedy single-node moves.
    ``max_size`` optionally tightens the upper size bound.
    """
    n = len(g.nodes)
    if k < 1 or k > n:
        raise GraphError(f"cannot split {n} nodes into {k} parts")
    lo, hi = size_bounds(n, k, imbalance)
    if max_size is not None:
        hi = min(hi, max_size)
        if hi * k < n:
            raise GraphError(f"{n} nodes do not fit into {k} parts of at most {hi}")
    adj = g.adjacency()
    parts = _recursive_split(adj, set(g.nodes), k, lo, hi)
    return sorted(parts, key=min)


def _recursive_split(adj, nodes: set[int], k: int, lo: int, hi: int) -> list[set[int]]:
    if k == 1:
        return [nodes]
    k1 = k // 2
    k2 = k - k1
    m = len(nodes)
    size_min = max(k1 * lo, m - k2 * hi)
    size_max = min(k1 * hi, m - k2 * lo)
    target = min(max(round(m * k1 / k), size_min), size_max)
    if m <= EXHAUSTIVE_LIMIT:
        a = _exhaustive_bisect(adj, nodes, size_min, size_max)
    else:
        a = _greedy_bisect(adj, nodes, target, size_min, size_max)
    return _recursive_split(adj, a, k1, lo, hi) + _recursive_split(adj, nodes - a, k2, lo, hi)


def _exhaustive_bisect(adj, nodes: set[int], size_min: int, size_max: int) -> set[int]:
    ordered = sorted(nodes)
    best, best_score = None, math.inf
    for size in range(size_min, size_max + 1):
        for combo in itertools.combinations(ordered, size):
            part = set(combo)
            score = normalized_cut(adj, part, nodes)
            if best is None or score < best_score - 1e-12:
                best, best_score = part, score
    return best


def _bfs_order(adj, nodes: set[int]) -> list[int]:
    """Nodes ordered component by component, each by BFS from a peripheral node."""

    def bfs(start: int, allowed: set[int]) -> list[int]:
        seen = {start}
        order = [start]
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in sorted(adj[u]):
                if v in allowed and v not in seen:
                    seen.add(v)
                    order.append(v)
                    queue.append(v)
        return order

    order: list[int] = []
    left = set(nodes)
    while left:
        comp = bfs(min(left), left)
        # two sweeps approximate a diameter endpoint
        comp = bfs(comp[-1], set(comp))
        order.extend(comp)
        left -= set(comp)
    return order


def _greedy_bisect(adj, nodes: set[int], target: int, size_min: int, size_max: int,
                   max_moves: int | None = None) -> set[int]:
    order = _bfs_order(adj, nodes)
    side = {u: (0 if i < target else 1) for i, u in enumerate(order)}
    # link[u][s]: weight from u to side s
    link = {u: [0.0, 0.0] for u in nodes}
    deg = {u: 0.0 for u in nodes}
    for u in nodes:
        for v, w in adj[u].items():
            if v in nodes:
                link[u][side[v]] += w
                deg[u] += w
    vol = [0.0, 0.0]
    count = [0, 0]
    for u in nodes:
        vol[side[u]] += deg[u]
        count[side[u]] += 1
    cut = sum(link[u][1] for u in nodes if side[u] == 0)
    score = _ncut_value(cut, vol[0], vol[1])

    if max_moves is None:
        max_moves = 4 * len(nodes)
    boundary = {u for u in nodes if link[u][1 - side[u]] > 0}
    for _ in range(max_moves):
        best_u, best_score = None, score - 1e-12
        for u in sorted(boundary):
            s = side[u]
            if s == 0 and count[0] - 1 < size_min:
                continue
            if s == 1 and count[0] + 1 > size_max:
                continue
            new_cut = cut + link[u][s] - link[u][1 - s]
            new_vol = list(vol)
            new_vol[s] -= deg[u]
            new_vol[1 - s] += deg[u]
            new_score = _ncut_value(new_cut, new_vol[0], new_vol[1])
            if new_score < best_score:
                best_u, best_score = u, new_score
        if best_u is None:
            break
        u = best_u
        s = side[u]
        cut += link[u][s] - link[u][1 - s]
        vol[s] -= deg[u]
        vol[1 - s] += deg[u]
        count[s] -= 1
        count[1 - s] += 1
        side[u] = 1 - s
        score = best_score
        for v, w in adj[u].items():
            if v not in nodes:
                continue
            link[v][s] -= w
            link[v][1 - s] += w
            if link[v][1 - side[v]] > 0:
                boundary.add(v)
            else:
                boundary.discard(v)
        if link[u][s] > 0:
            boundary.add(u)
        else:
            boundary.discard(u)
    return {u for u in nodes if side[u] == 0}
