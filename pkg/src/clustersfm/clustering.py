"""Size-bounded image clustering with overlap expansion.

The match graph is cut into balanced parts, the cut ("lost") edges are grouped
by cluster pair, and clusters are grown along a maximum spanning tree of the
cluster graph so that neighbouring clusters share images. A seeded random phase
then keeps adding lost edges while some cluster's overlap ratio is too low.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import WeightedGraph, balanced_partition, build_graph, spanning_forest

logger = logging.getLogger(__name__)

LostEdge = tuple[int, int, float]
LostEdgeMap = dict[tuple[int, int], list[LostEdge]]


@dataclass(frozen=True)
class ClusteringParams:
    max_cluster_size: int = 100
    completeness: float = 0.7
    max_overlap: int = 10
    size_slack: float = 0.3
    seed: int = 0
    max_random_rounds: Optional[int] = None  # default: 10 * number of clusters

    def __post_init__(self):
        if self.max_cluster_size < 2:
            raise ValueError("max_cluster_size must be >= 2")
        if not 0 < self.completeness <= 1:
            raise ValueError("completeness must be in (0, 1]")
        if self.max_overlap < 1:
            raise ValueError("max_overlap must be >= 1")
        if self.size_slack < 0:
            raise ValueError("size_slack must be >= 0")
        if self.max_random_rounds is not None and self.max_random_rounds < 1:
            raise ValueError("max_random_rounds must be >= 1")

    @property
    def size_cap(self) -> int:
        return math.floor(self.max_cluster_size * (1 + self.size_slack) + 1e-9)

    def rounds_for(self, k: int) -> int:
        return self.max_random_rounds if self.max_random_rounds is not None else 10 * k


@dataclass
class ClusterSet:
    """Ordered image clusters plus the diagnostics of how they were built.

    Attributes:
        clusters: image-id sets; disjoint right after the cut, overlapping after expansion.
        unsatisfied: indices of clusters whose overlap ratio stayed below the threshold.
        oversize: indices of clusters larger than the size cap.
        stop_reason: how the random phase ended (``"satisfied"``, ``"exhausted"``,
            ``"budget"``) or ``"cut"`` when no expansion ran.
    """

    clusters: list[frozenset[int]]
    params: Optional[ClusteringParams] = None
    unsatisfied: list[int] = field(default_factory=list)
    oversize: list[int] = field(default_factory=list)
    stop_reason: str = "cut"
    random_rounds: int = 0

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def provenance(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = defaultdict(set)
        for k, c in enumerate(self.clusters):
            for img in c:
                out[img].add(k)
        return dict(out)

    def images(self) -> set[int]:
        return set().union(*self.clusters) if self.clusters else set()

    def completeness(self, i: int) -> float:
        return completeness(self, i)


def completeness(cs: ClusterSet, i: int) -> float:
    ci = cs.clusters[i]
    if not ci:
        return 0.0
    if len(cs.clusters) == 1:
        return 1.0  # a lone cluster loses no edges, so there is nothing to overlap
    shared = sum(len(ci & cj) for j, cj in enumerate(cs.clusters) if j != i)
    return shared / len(ci)


def num_clusters(n: int, params: ClusteringParams) -> int:
    """``floor(n / S_max)``, raised when needed so balanced parts fit under the size cap."""
    k = max(1, n // params.max_cluster_size)
    return max(k, math.ceil(n / params.size_cap)) if n > params.size_cap else k


def cut_images(g: WeightedGraph, params: ClusteringParams) -> ClusterSet:
    n = len(g.nodes)
    if n == 0:
        raise ValueError("cannot cluster an empty match graph")
    k = num_clusters(n, params)
    if k == 1:
        parts = [set(g.nodes)]
    else:
        parts = balanced_partition(g, k, max_size=params.size_cap)
    clusters = [frozenset(p) for p in parts]
    oversize = [i for i, c in enumerate(clusters) if len(c) > params.size_cap]
    if oversize:
        logger.warning("clusters %s exceed the size cap %d", oversize, params.size_cap)
    return ClusterSet(clusters, params, oversize=oversize)


def collect_lost_edges(g: WeightedGraph, cs: ClusterSet) -> LostEdgeMap:
    owner: dict[int, int] = {}
    for k, c in enumerate(cs.clusters):
        for img in c:
            if img in owner:
                raise ValueError(f"image {img} is in clusters {owner[img]} and {k}; expected a disjoint cover")
            owner[img] = k
    lost: LostEdgeMap = defaultdict(list)
    for (a, b), (w, _) in g.edge_map.items():
        ka, kb = owner[a], owner[b]
        if ka == kb:
            continue
        if ka > kb:
            a, b, ka, kb = b, a, kb, ka
        lost[(ka, kb)].append((a, b, w))
    for edges in lost.values():
        edges.sort(key=lambda e: (-e[2], min(e[0], e[1]), max(e[0], e[1])))
    return dict(sorted(lost.items()))


class _Expander:
    """Mutable cluster state with incremental overlap bookkeeping."""

    def __init__(self, clusters, cap: int):
        self.sets = [set(c) for c in clusters]
        self.cap = cap
        self.members: dict[int, set[int]] = defaultdict(set)
        for k, c in enumerate(self.sets):
            for img in c:
                self.members[img].add(k)
        # shared[k] = sum over j != k of |C_k ∩ C_j|
        self.shared = [sum(len(self.members[x]) - 1 for x in c) for c in self.sets]

    def eta(self, k: int) -> float:
        return self.shared[k] / len(self.sets[k]) if self.sets[k] else 0.0

    def can_add(self, k: int, img: int) -> bool:
        return img not in self.sets[k] and len(self.sets[k]) < self.cap

    def add(self, k: int, img: int) -> bool:
        if not self.can_add(k, img):
            return False
        holders = self.members[img]
        for h in holders:
            self.shared[h] += 1
        self.shared[k] += len(holders)
        holders.add(k)
        self.sets[k].add(img)
        return True

    def applicable(self, k1: int, k2: int, a: int, b: int) -> bool:
        return self.can_add(k1, b) or self.can_add(k2, a)

    def insert(self, k1: int, k2: int, a: int, b: int) -> bool:
        added_b = self.add(k1, b)
        added_a = self.add(k2, a)
        return added_a or added_b


def expand_clusters(cs: ClusterSet, lost: LostEdgeMap, params: ClusteringParams) -> ClusterSet:
    """Grow disjoint clusters with lost edges so that neighbours overlap.

    Each lost edge ``(a, b)`` between clusters ``k1 ∋ a`` and ``k2 ∋ b`` adds
    ``b`` to ``k1`` and ``a`` to ``k2``; an insertion that would push a cluster
    past the size cap is skipped. The top ``max_overlap`` edges of every
    maximum-spanning-tree pair are applied first, then random lost edges
    touching unsatisfied clusters, one per unsatisfied cluster per round.
    """
    k = len(cs.clusters)
    state = _Expander(cs.clusters, params.size_cap)
    cluster_graph = build_graph(
        [(k1, k2, len(edges)) for (k1, k2), edges in lost.items() if edges], nodes=range(k)
    )
    tree_pairs = sorted(
        (e for t in spanning_forest(cluster_graph, "maximize") for e in t.edges),
        key=lambda e: (-e[2], e[0], e[1]),
    )
    applied: set[tuple[int, int, int]] = set()
    for k1, k2, _, _ in tree_pairs:
        for idx, (a, b, _) in enumerate(lost[(k1, k2)][: params.max_overlap]):
            state.insert(k1, k2, a, b)
            applied.add((k1, k2, idx))

    # Remaining lost edges indexed by the clusters they touch.
    incident: dict[int, list[tuple[int, int, int]]] = defaultdict(list)
    for (k1, k2), edges in lost.items():
        for idx in range(len(edges)):
            if (k1, k2, idx) not in applied:
                incident[k1].append((k1, k2, idx))
                incident[k2].append((k1, k2, idx))

    rng = np.random.default_rng(params.seed)
    budget = params.rounds_for(k)
    rounds = 0
    reason = "budget"
    while True:
        unsat = [i for i in range(k) if state.eta(i) < params.completeness]
        if not unsat:
            reason = "satisfied"
            break
        if rounds >= budget:
            break
        progress = False
        for i in unsat:
            if state.eta(i) >= params.completeness:
                continue
            # Rejection sampling: an edge that is applied or blocked stays so
            # (clusters only grow), so dropping it keeps the draw uniform over
            # the applicable ones.
            cands = incident[i]
            while cands:
                j = int(rng.integers(len(cands)))
                k1, k2, idx = cands[j]
                cands[j] = cands[-1]
                cands.pop()
                a, b, _ = lost[(k1, k2)][idx]
                if (k1, k2, idx) in applied or not state.applicable(k1, k2, a, b):
                    continue
                state.insert(k1, k2, a, b)
                applied.add((k1, k2, idx))
                progress = True
                break
        rounds += 1
        if not progress:
            reason = "exhausted"
            break

    clusters = [frozenset(s) for s in state.sets]
    unsatisfied = [i for i in range(k) if state.eta(i) < params.completeness]
    if unsatisfied:
        logger.info("completeness %.2f not reached for clusters %s (%s)",
                    params.completeness, unsatisfied, reason)
    oversize = [i for i, c in enumerate(clusters) if len(c) > params.size_cap]
    return ClusterSet(clusters, params, unsatisfied=unsatisfied, oversize=oversize,
                      stop_reason=reason, random_rounds=rounds)


def cluster_images(g: WeightedGraph, params: ClusteringParams) -> ClusterSet:
    cs = cut_images(g, params)
    if len(cs) == 1:
        return cs
    lost = collect_lost_edges(g, cs)
    return expand_clusters(cs, lost, params)
