"""Shared fixtures-as-functions for the test modules."""

import numpy as np

from clustersfm.graph import build_graph
from clustersfm.reconstruction import CameraPose, Reconstruction
from clustersfm.rotation import random_rotation
from clustersfm.sim3 import SimilarityTransform


def random_geometric_graph(n: int, seed: int, radius: float | None = None):
    """Nodes uniform in the unit square, linked when closer than ``radius``.

    Weights fall off with distance, like match counts between nearby photos.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    if radius is None:
        radius = min(0.5, 1.8 * np.sqrt(np.log(n + 1) / (np.pi * n)))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    ii, jj = np.nonzero(np.triu(d < radius, 1))
    edges = [(int(i), int(j), int(100 * (1 - d[i, j] / radius)) + 1) for i, j in zip(ii, jj)]
    return build_graph(edges, nodes=range(n))


def random_sim3(rng: np.random.Generator, s_range=(0.1, 10.0), t_scale=10.0) -> SimilarityTransform:
    s = float(np.exp(rng.uniform(np.log(s_range[0]), np.log(s_range[1]))))
    return SimilarityTransform(s, random_rotation(rng), rng.uniform(-t_scale, t_scale, 3))


def random_reconstruction(rng: np.random.Generator, ids, cluster_id=None, spread=10.0) -> Reconstruction:
    cams = [CameraPose.from_rotation(i, random_rotation(rng), rng.uniform(-spread, spread, 3)) for i in ids]
    return Reconstruction(cams, (), cluster_id)
