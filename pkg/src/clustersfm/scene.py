"""Synthetic ground-truth scenes and a synthetic local solver.

Scenes are deterministic for ``(layout, counts, seed)``. The local solver hands
back a cluster's ground-truth cameras in a fresh random gauge with optional
noise and outliers, which is what an independent reconstruction of that cluster
looks like up to its own errors.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .graph import WeightedGraph, build_graph
from .reconstruction import CameraPose, Reconstruction, ScenePoint
from .rotation import angle_between, look_at, random_rotation, small_random_rotation
from .sim3 import SimilarityTransform, apply_similarity, umeyama

LAYOUTS = ("orbit", "grid", "street")

ORBIT_RADIUS = 10.0
GRID_SPACING = 1.0
GRID_ALTITUDE = 4.0
STREET_SPACING = 1.0
FACADE_DISTANCE = 6.0

# Visibility model for scene points
VIEW_HALF_ANGLE_DEG = 50.0
MAX_VIEW_ANGLE_DEG = 60.0


@dataclass(frozen=True, eq=False)
class GroundTruthScene:
    cameras: Reconstruction
    points: np.ndarray
    layout: str
    seed: int

    def __post_init__(self):
        if len(self.cameras) < 2:
            raise ValueError("a scene needs at least two cameras")
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(-1, 3))

    @property
    def diameter(self) -> float:
        return self.cameras.diameter()

    def __len__(self) -> int:
        return len(self.cameras)


@dataclass(frozen=True)
class NoiseModel:
    """Per-cluster perturbation applied by the synthetic solver.

    ``sigma_center`` is a fraction of the scene diameter; gauge scales are drawn
    log-uniformly from ``gauge_scale``.
    """

    sigma_center: float = 0.0
    sigma_rot_deg: float = 0.0
    outlier_fraction: float = 0.0
    gauge: bool = True
    gauge_scale: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        vals = (self.sigma_center, self.sigma_rot_deg, self.outlier_fraction, *self.gauge_scale)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("noise parameters must be finite")
        if self.sigma_center < 0 or self.sigma_rot_deg < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0 <= self.outlier_fraction < 0.5:
            raise ValueError("outlier_fraction must be in [0, 0.5)")
        lo, hi = self.gauge_scale
        if not 0 < lo <= hi:
            raise ValueError("gauge_scale must satisfy 0 < lo <= hi")


def generate_scene(layout: str, n_cameras: int, n_points: int = 500, seed: int = 0) -> GroundTruthScene:
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if n_cameras < 2:
        raise ValueError("n_cameras must be >= 2")
    rng = np.random.default_rng(seed)
    if layout == "orbit":
        ang = 2 * np.pi * np.arange(n_cameras) / n_cameras
        centers = np.stack([ORBIT_RADIUS * np.cos(ang), ORBIT_RADIUS * np.sin(ang), np.zeros(n_cameras)], 1)
        targets = np.zeros_like(centers)
        u = rng.normal(size=(n_points, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        points = u * (0.3 * ORBIT_RADIUS * rng.random(n_points) ** (1 / 3))[:, None]
    elif layout == "grid":
        rows = math.ceil(math.sqrt(n_cameras))
        cols = math.ceil(n_cameras / rows)
        centers = []
        for r in range(rows):
            order = range(cols) if r % 2 == 0 else reversed(range(cols))
            centers.extend((c * GRID_SPACING, r * GRID_SPACING, GRID_ALTITUDE) for c in order)
        centers = np.array(centers[:n_cameras], dtype=float)
        centers += rng.normal(scale=0.05 * GRID_SPACING, size=centers.shape)
        targets = centers - np.array([0.0, 0.0, GRID_ALTITUDE])
        targets[:, :2] += rng.normal(scale=0.1 * GRID_SPACING, size=(n_cameras, 2))
        lo, hi = centers.min(0), centers.max(0)
        points = np.column_stack([
            rng.uniform(lo[0] - 1, hi[0] + 1, n_points),
            rng.uniform(lo[1] - 1, hi[1] + 1, n_points),
            rng.uniform(-0.5, 0.5, n_points),
        ])
    else:
        x = STREET_SPACING * np.arange(n_cameras, dtype=float)
        centers = np.column_stack([
            x, rng.normal(scale=0.1, size=n_cameras), 1.5 + rng.normal(scale=0.1, size=n_cameras)
        ])
        targets = centers + np.column_stack([
            rng.normal(scale=0.5, size=n_cameras), np.full(n_cameras, FACADE_DISTANCE), np.zeros(n_cameras)
        ])
        points = np.column_stack([
            rng.uniform(x[0] - 2, x[-1] + 2, n_points),
            FACADE_DISTANCE + rng.uniform(-0.5, 0.5, n_points),
            rng.uniform(0, 6, n_points),
        ])
    cams = [CameraPose.from_rotation(i, look_at(c, tgt), c) for i, (c, tgt) in enumerate(zip(centers, targets))]
    return GroundTruthScene(Reconstruction(cams), points, layout, seed)


def viewing_directions(rec: Reconstruction) -> np.ndarray:
    """Optical axes in world coordinates (third row of each world-to-camera rotation)."""
    return rec.rotations()[:, 2, :]


def derive_match_graph(scene: GroundTruthScene, covis: float = 0.2, weight_scale: float = 100.0,
                       max_angle_deg: float = MAX_VIEW_ANGLE_DEG) -> WeightedGraph:
    """Simulated verified-match graph: nearby cameras with similar viewing directions.

    Pairs closer than ``covis * diameter`` whose optical axes differ by less than
    ``max_angle_deg`` are linked with weight ``floor(weight_scale * (1 - d / d_max)) + 1``.
    """
    ids = np.array(scene.cameras.image_ids)
    C = scene.cameras.centers()
    dirs = viewing_directions(scene.cameras)
    d_max = covis * scene.diameter
    dist = np.linalg.norm(C[:, None, :] - C[None, :, :], axis=2)
    cos = np.clip(dirs @ dirs.T, -1.0, 1.0)
    ok = (dist < d_max) & (cos > math.cos(math.radians(max_angle_deg)))
    ia, ib = np.nonzero(np.triu(ok, k=1))
    weights = np.floor(weight_scale * (1.0 - dist[ia, ib] / d_max)) + 1
    edges = [(int(ids[a]), int(ids[b]), float(w)) for a, b, w in zip(ia, ib, weights)]
    return build_graph(edges, nodes=ids.tolist())


def random_gauge(rng: np.random.Generator, diameter: float, scale_range=(0.5, 2.0)) -> SimilarityTransform:
    lo, hi = scale_range
    s = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    R = random_rotation(rng)
    t = rng.uniform(-0.5 * diameter, 0.5 * diameter, size=3)
    return SimilarityTransform(s, R, t)


def visible_points(scene: GroundTruthScene, cam_ids: Iterable[int], min_views: int = 2,
                   max_range: Optional[float] = None) -> list[tuple[int, np.ndarray, tuple[int, ...]]]:
    """Scene points seen by at least ``min_views`` of the given cameras."""
    ids = sorted(cam_ids)
    if len(scene.points) == 0 or not ids:
        return []
    if max_range is None:
        max_range = 0.5 * scene.diameter
    C = np.array([scene.cameras.camera(i).C for i in ids])
    R = np.array([scene.cameras.camera(i).R for i in ids])
    rel = scene.points[None, :, :] - C[:, None, :]
    z = np.einsum("cj,cpj->cp", R[:, 2, :], rel)
    rng_ = np.linalg.norm(rel, axis=2)
    cos_lim = math.cos(math.radians(VIEW_HALF_ANGLE_DEG))
    seen = (z > 0) & (z >= cos_lim * rng_) & (rng_ <= max_range)
    out = []
    for p in np.flatnonzero(seen.sum(axis=0) >= min_views):
        obs = tuple(ids[c] for c in np.flatnonzero(seen[:, p]))
        out.append((int(p), scene.points[p], obs))
    return out


def _solver_streams(seed: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def cluster_gauge(scene: GroundTruthScene, noise: NoiseModel, seed: int) -> SimilarityTransform:
    """The world-to-local gauge that ``solve_cluster_synthetic`` uses for this seed."""
    if not noise.gauge:
        return SimilarityTransform.identity()
    return random_gauge(_solver_streams(seed)[0], scene.diameter, noise.gauge_scale)


def injected_outliers(cluster: Iterable[int], noise: NoiseModel, seed: int) -> set[int]:
    """Image ids whose poses ``solve_cluster_synthetic`` replaces with random ones."""
    ids = sorted(int(i) for i in cluster)
    n_out = math.floor(noise.outlier_fraction * len(ids))
    if n_out == 0:
        return set()
    return set(_solver_streams(seed)[1].choice(ids, size=n_out, replace=False).tolist())


def solve_cluster_synthetic(scene: GroundTruthScene, cluster: Iterable[int], noise: NoiseModel = NoiseModel(),
                            seed: int = 0, cluster_id: Optional[int] = None,
                            cost_per_image_sq: float = 0.0) -> Reconstruction:
    """Stand-in local solver: ground truth under a random gauge, plus noise and outliers.

    Noise is added in world units before the gauge is applied. ``cost_per_image_sq``
    makes the call sleep ``c * m**2`` seconds for a cluster of ``m`` images,
    emulating a solver whose cost grows quadratically with cluster size.
    """
    ids = sorted(int(i) for i in cluster)
    if not ids:
        raise ValueError("empty cluster")
    unknown = [i for i in ids if i not in scene.cameras]
    if unknown:
        raise KeyError(f"unknown image ids {unknown[:10]}")
    if cost_per_image_sq > 0:
        time.sleep(cost_per_image_sq * len(ids) ** 2)

    gauge = cluster_gauge(scene, noise, seed)
    outliers = injected_outliers(ids, noise, seed)
    rng = _solver_streams(seed)[2]
    sig_c = noise.sigma_center * scene.diameter
    sig_r = math.radians(noise.sigma_rot_deg)
    lo = scene.cameras.centers().min(axis=0)
    hi = scene.cameras.centers().max(axis=0)

    cams = []
    for i in ids:
        gt = scene.cameras.camera(i)
        if i in outliers:
            C = rng.uniform(lo, hi)
            R = random_rotation(rng)
        else:
            C = gt.C + (rng.normal(scale=sig_c, size=3) if sig_c > 0 else 0.0)
            R = gt.R if sig_r == 0 else small_random_rotation(rng, sig_r) @ gt.R
        cams.append(CameraPose.from_rotation(i, R, C))

    pts = []
    for pid, xyz, obs in visible_points(scene, ids):
        X = xyz + (rng.normal(scale=sig_c, size=3) if sig_c > 0 else 0.0)
        pts.append(ScenePoint(pid, X, obs))
    return apply_similarity(gauge, Reconstruction(cams, pts, cluster_id))


def evaluate_against_gt(merged: Reconstruction, scene: GroundTruthScene,
                        exclude: Iterable[int] = ()) -> dict:
    """Accuracy of a model after removing its gauge by a best-fit similarity.

    Returns center RMSE as a fraction of the scene diameter, rotation errors in
    degrees, and the recovered camera count and fraction. Cameras in ``exclude``
    (e.g. poses known to be corrupted upstream) count as recovered but are left
    out of alignment and error statistics.
    """
    skip = set(exclude)
    common = sorted(i for i in merged.image_ids if i in scene.cameras and i not in skip)
    recovered = sum(1 for i in merged.image_ids if i in scene.cameras)
    extra = [i for i in merged.image_ids if i not in scene.cameras]
    if extra:
        raise ValueError(f"model contains images not in the scene: {extra[:10]}")
    if len(common) < 3:
        raise ValueError(f"need at least 3 common cameras to evaluate, got {len(common)}")
    X = np.array([merged.camera(i).C for i in common])
    Y = np.array([scene.cameras.camera(i).C for i in common])
    T = umeyama(X, Y)
    aligned = apply_similarity(T, Reconstruction([merged.camera(i) for i in common]))
    err = np.linalg.norm(aligned.centers() - Y, axis=1)
    rot = np.array([
        np.degrees(angle_between(aligned.camera(i).R, scene.cameras.camera(i).R)) for i in common
    ])
    D = scene.diameter
    return {
        "center_rmse": float(np.sqrt(np.mean(err ** 2)) / D),
        "center_max": float(err.max() / D),
        "rotation_mean_deg": float(rot.mean()),
        "rotation_max_deg": float(rot.max()),
        "evaluated": len(common),
        "recovered": recovered,
        "recovered_fraction": recovered / len(scene),
        "alignment_scale": T.s,
    }
