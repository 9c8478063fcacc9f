"""Graph-based merging of local reconstructions into common frames.

Clusters sharing cameras are linked by robustly estimated similarity
transforms weighted by their symmetric residual. A minimum spanning tree keeps
the most reliable links, its center (found by peeling leaves) becomes the anchor,
and every cluster is mapped into the anchor frame by composing transforms along
its tree path.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .graph import Tree, WeightedGraph, build_graph, peel_to_center, spanning_forest
from .reconstruction import Reconstruction, ScenePoint
from .sim3 import (
    AlignmentError,
    CorrespondenceSet,
    RansacParams,
    SimilarityTransform,
    apply_similarity,
    estimate_similarity,
    mse,
    msd,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MergeParams:
    ransac: RansacParams = RansacParams()
    # Edges whose normalized MSD exceeds this are dropped.
    msd_reject: float = 0.05
    min_common: int = 3


@dataclass(frozen=True)
class MergeEdge:
    """A usable link between two clusters ``k1 < k2``.

    ``T_12`` maps frame ``k1`` into frame ``k2``. ``weight`` is the symmetric
    residual: the larger of the two directed residuals, each divided by the
    camera diameter of its target frame so that clusters in different gauges are
    comparable.
    """

    k1: int
    k2: int
    T_12: SimilarityTransform
    T_21: SimilarityTransform
    inliers: frozenset[int]
    mse_12: float
    mse_21: float
    weight: float
    common: int = 0

    def transform(self, src: int, dst: int) -> SimilarityTransform:
        if (src, dst) == (self.k1, self.k2):
            return self.T_12
        if (src, dst) == (self.k2, self.k1):
            return self.T_12.inverse()
        raise KeyError(f"edge ({self.k1}, {self.k2}) does not join {src} and {dst}")


@dataclass
class MergeGraph:
    clusters: list[int]
    edges: dict[tuple[int, int], MergeEdge]
    # (k1, k2, reason) for pairs that shared cameras but produced no edge
    rejected: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def graph(self) -> WeightedGraph:
        return build_graph(
            [(k1, k2, e.weight, (k1, k2)) for (k1, k2), e in sorted(self.edges.items())],
            nodes=self.clusters,
        )


@dataclass
class MergePlan:
    tree: Tree
    anchor: int
    to_anchor: dict[int, SimilarityTransform]
    layers: list[set[int]]
    depth: dict[int, int]


@dataclass
class MergedModel:
    reconstruction: Reconstruction
    plan: MergePlan
    # image id -> cluster whose copy of the camera was kept
    source: dict[int, int] = field(default_factory=dict)


def pair_seed(seed: int, k1: int, k2: int) -> int:
    return int(np.random.SeedSequence([seed, k1, k2]).generate_state(1)[0])


def estimate_edge(r1: Reconstruction, r2: Reconstruction, params: MergeParams) -> MergeEdge:
    """Estimate both directed transforms between two clusters and their symmetric weight.

    Raises:
        AlignmentError: too few shared cameras or no consensus in either direction.
    """
    k1, k2 = r1.cluster_id, r2.cluster_id
    corr = CorrespondenceSet.between(r1, r2)
    if len(corr) < params.min_common:
        raise AlignmentError(f"only {len(corr)} common cameras")
    base = params.ransac
    seed = pair_seed(base.seed, k1, k2)
    p12 = replace(base, seed=seed)
    p21 = replace(base, seed=seed + 1)
    d1, d2 = r1.diameter(), r2.diameter()
    T12, in12 = estimate_similarity(corr, p12, scale_ref=d2)
    rev = corr.reversed()
    T21, in21 = estimate_similarity(rev, p21, scale_ref=d1)

    idx12 = [corr.ids.index(i) for i in in12]
    idx21 = [rev.ids.index(i) for i in in21]
    m12 = mse(T12, corr.C1[idx12], corr.C2[idx12])
    m21 = mse(T21, rev.C1[idx21], rev.C2[idx21])
    weight = msd(m12 / d2 if d2 > 0 else m12, m21 / d1 if d1 > 0 else m21)
    return MergeEdge(k1, k2, T12, T21, frozenset(in12), m12, m21, weight, len(corr))


def build_merge_graph(recons: Sequence[Reconstruction], params: MergeParams = MergeParams()) -> MergeGraph:
    if not recons:
        raise ValueError("no reconstructions to merge")
    recons = sorted(recons, key=lambda r: r.cluster_id)
    ids = [r.cluster_id for r in recons]
    if len(set(ids)) != len(ids) or any(i is None for i in ids):
        raise ValueError("reconstructions need distinct cluster ids")
    image_sets = [set(r.image_ids) for r in recons]
    edges: dict[tuple[int, int], MergeEdge] = {}
    rejected: list[tuple[int, int, str]] = []
    for a in range(len(recons)):
        for b in range(a + 1, len(recons)):
            n_common = len(image_sets[a] & image_sets[b])
            if n_common == 0:
                continue
            k1, k2 = ids[a], ids[b]
            if n_common < params.min_common:
                rejected.append((k1, k2, f"only {n_common} common cameras"))
                continue
            try:
                edge = estimate_edge(recons[a], recons[b], params)
            except AlignmentError as exc:
                rejected.append((k1, k2, str(exc)))
                continue
            if edge.weight > params.msd_reject:
                rejected.append((k1, k2, f"msd {edge.weight:.3g} above {params.msd_reject}"))
                continue
            edges[(k1, k2)] = edge
    return MergeGraph(ids, edges, rejected)


def select_minst(mg: MergeGraph) -> list[Tree]:
    """Minimum spanning tree of every connected component of the merge graph."""
    return spanning_forest(mg.graph, "minimize")


def find_anchor(t: Tree, sizes: dict[int, int]) -> tuple[int, list[set[int]]]:
    """Center of the tree; between two centers the larger cluster wins (then the smaller id)."""
    survivors, layers = peel_to_center(t)
    anchor = min(survivors, key=lambda c: (-sizes.get(c, 0), c))
    return anchor, layers


def compose_to_anchor(t: Tree, anchor: int, edges: dict[tuple[int, int], MergeEdge]
                      ) -> tuple[dict[int, SimilarityTransform], dict[int, int]]:
    """Transform from every cluster frame into the anchor frame, and the hop depth."""
    if anchor not in t.nodes:
        raise KeyError(f"anchor {anchor} is not in the tree")
    adj = t.adjacency()
    to_anchor = {anchor: SimilarityTransform.identity()}
    depth = {anchor: 0}
    queue = deque([anchor])
    while queue:
        parent = queue.popleft()
        for child in sorted(adj[parent]):
            if child in to_anchor:
                continue
            key = (min(child, parent), max(child, parent))
            if key not in edges:
                raise KeyError(f"no transform for tree edge {key}")
            to_anchor[child] = to_anchor[parent] @ edges[key].transform(child, parent)
            depth[child] = depth[parent] + 1
            queue.append(child)
    return to_anchor, depth


def _union(recons: dict[int, Reconstruction], plan: MergePlan) -> tuple[Reconstruction, dict[int, int]]:
    """Map every cluster into the anchor frame and keep one copy per camera.

    A camera held by several clusters comes from the one closest to the anchor
    in tree hops, then the larger cluster, then the smaller cluster id.
    """
    sizes = {k: len(r) for k, r in recons.items()}
    moved = {k: apply_similarity(plan.to_anchor[k], recons[k]) for k in sorted(plan.to_anchor)}
    source: dict[int, int] = {}
    for k in sorted(moved, key=lambda k: (plan.depth[k], -sizes[k], k)):
        for img in moved[k].image_ids:
            source.setdefault(img, k)
    cams = [moved[source[i]].camera(i) for i in sorted(source)]
    points = [
        ScenePoint(f"{k}:{p.id}", p.xyz, p.obs) for k in sorted(moved) for p in moved[k].points
    ]
    return Reconstruction(cams, points, None), {i: source[i] for i in sorted(source)}


def merge_all(recons: Sequence[Reconstruction], params: MergeParams = MergeParams(),
              merge_graph: Optional[MergeGraph] = None) -> list[MergedModel]:
    """Merge local reconstructions into one model per connected component.

    Models are ordered by camera count (largest first), then by smallest
    cluster id. Single-cluster components are returned unchanged.
    """
    if not recons:
        raise ValueError("no reconstructions to merge")
    by_id = {r.cluster_id: r for r in recons}
    mg = merge_graph if merge_graph is not None else build_merge_graph(recons, params)
    sizes = {k: len(r) for k, r in by_id.items()}
    models = []
    for tree in select_minst(mg):
        anchor, layers = find_anchor(tree, sizes)
        to_anchor, depth = compose_to_anchor(tree, anchor, mg.edges)
        plan = MergePlan(tree, anchor, to_anchor, layers, depth)
        if len(tree.nodes) == 1:
            rec = by_id[anchor]
            source = {i: anchor for i in rec.image_ids}
        else:
            rec, source = _union({k: by_id[k] for k in tree.nodes}, plan)
        models.append(MergedModel(rec, plan, source))
    models.sort(key=lambda m: (-len(m.reconstruction), min(m.plan.tree.nodes)))
    return models
