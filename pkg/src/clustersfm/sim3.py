"""Similarity transforms between local reconstructions that share cameras.

Estimation follows a scale-then-Euclidean scheme: the relative scale comes from
ratios of camera-center distances, the rotation from a single camera's two
orientations, the translation from its center. RANSAC over two-camera samples
gives robustness; the consensus set is refit in closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .reconstruction import CameraPose, Reconstruction, ScenePoint, bounding_diameter
from .rotation import angle_between, project_to_so3

logger = logging.getLogger(__name__)

MIN_CORRESPONDENCES = 3
MAX_REFIT_ROTATION_DEG = 5.0


class AlignmentError(ValueError):
    pass


class InsufficientCorrespondencesError(AlignmentError):
    pass


class NoConsensusError(AlignmentError):
    pass


class DegenerateCentersError(AlignmentError):
    def __init__(self, pairs):
        self.pairs = pairs
        super().__init__(f"coincident frame-2 centers for pairs {pairs}")


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """``X2 = s * R @ X1 + t``."""

    s: float = 1.0
    R: np.ndarray = None
    t: np.ndarray = None

    def __post_init__(self):
        s = float(self.s)
        if not (math.isfinite(s) and s > 0):
            raise ValueError(f"similarity scale must be positive and finite, got {s}")
        R = np.eye(3) if self.R is None else np.asarray(self.R, dtype=float).reshape(3, 3)
        t = np.zeros(3) if self.t is None else np.asarray(self.t, dtype=float).reshape(3)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.s * X @ self.R.T + self.t

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ other``: apply ``other`` first."""
        return SimilarityTransform(self.s * other.s, self.R @ other.R,
                                   self.s * self.R @ other.t + self.t)

    def __matmul__(self, other: "SimilarityTransform") -> "SimilarityTransform":
        return self.compose(other)

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform(1.0 / self.s, self.R.T, -(self.R.T @ self.t) / self.s)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.s * self.R
        M[:3, 3] = self.t
        return M

    def __repr__(self):
        return f"SimilarityTransform(s={self.s:.6g}, R={self.R.tolist()}, t={self.t.tolist()})"


@dataclass(frozen=True)
class RansacParams:
    threshold: Optional[float] = None  # absolute inlier distance in frame-2 units
    threshold_ratio: float = 0.01  # used when threshold is None, times frame-2 diameter
    max_iters: int = 1000
    confidence: float = 0.999
    min_inliers: int = MIN_CORRESPONDENCES
    seed: int = 0
    # "orientations": rotation from the inlier cameras, scale/translation by least squares;
    # "centers": Umeyama on inlier centers, checked against the camera orientations.
    refit: str = "orientations"
    refit_iters: int = 5
    # During refitting the inlier distance grows to this multiple of the median
    # residual when that exceeds the base threshold; 0 keeps the threshold fixed.
    adaptive_factor: float = 2.5


class CorrespondenceSet:
    """Cameras observed in two frames, sorted by image id."""

    def __init__(self, pairs: list[tuple[CameraPose, CameraPose]]):
        pairs = sorted(pairs, key=lambda p: p[0].image_id)
        ids = [a.image_id for a, _ in pairs]
        for a, b in pairs:
            if a.image_id != b.image_id:
                raise ValueError(f"mismatched correspondence {a.image_id} vs {b.image_id}")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in correspondence set")
        self.pairs = pairs
        self.ids = ids
        self.C1 = np.array([a.C for a, _ in pairs]).reshape(-1, 3)
        self.C2 = np.array([b.C for _, b in pairs]).reshape(-1, 3)
        self.R1 = np.array([a.R for a, _ in pairs]).reshape(-1, 3, 3)
        self.R2 = np.array([b.R for _, b in pairs]).reshape(-1, 3, 3)

    @classmethod
    def between(cls, rec1: Reconstruction, rec2: Reconstruction) -> "CorrespondenceSet":
        common = sorted(set(rec1.image_ids) & set(rec2.image_ids))
        return cls([(rec1.camera(i), rec2.camera(i)) for i in common])

    def __len__(self) -> int:
        return len(self.pairs)

    def subset(self, idx) -> "CorrespondenceSet":
        return CorrespondenceSet([self.pairs[i] for i in idx])

    def reversed(self) -> "CorrespondenceSet":
        return CorrespondenceSet([(b, a) for a, b in self.pairs])


def relative_scale(corr: CorrespondenceSet) -> float:
    """Median over all camera pairs of (frame-1 distance / frame-2 distance)."""
    n = len(corr)
    if n < 2:
        raise InsufficientCorrespondencesError(f"relative scale needs 2 correspondences, got {n}")
    i, j = np.triu_indices(n, k=1)
    d1 = np.linalg.norm(corr.C1[i] - corr.C1[j], axis=1)
    d2 = np.linalg.norm(corr.C2[i] - corr.C2[j], axis=1)
    tiny = 1e-12 * max(bounding_diameter(corr.C2), 1e-300)
    bad = d2 <= tiny
    if bad.any():
        raise DegenerateCentersError([(corr.ids[a], corr.ids[b]) for a, b in zip(i[bad], j[bad])])
    return float(np.median(d1 / d2))


def relative_euclidean(pose1: CameraPose, pose2: CameraPose, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation that carry one camera from frame 1 to frame 2 at scale ``s``.

    With world-to-camera rotations, a frame change ``X2 = s R X1 + t`` turns a
    camera rotation ``R1`` into ``R1 R^T``; hence ``R = R2^T R1``.
    """
    R12 = pose2.R.T @ pose1.R
    t12 = pose2.C - s * R12 @ pose1.C
    return R12, t12


def umeyama(X1, X2, with_scale: bool = True) -> SimilarityTransform:
    """Closed-form least-squares similarity with ``X2 ≈ s R X1 + t``."""
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    mu1, mu2 = X1.mean(axis=0), X2.mean(axis=0)
    A, B = X1 - mu1, X2 - mu2
    cov = B.T @ A / len(X1)
    U, D, Vt = np.linalg.svd(cov)
    S = np.diag([1.0, 1.0, np.sign(np.linalg.det(U) * np.linalg.det(Vt)) or 1.0])
    R = U @ S @ Vt
    var1 = (A ** 2).sum() / len(X1)
    s = float(np.trace(np.diag(D) @ S) / var1) if with_scale else 1.0
    return SimilarityTransform(s, R, mu2 - s * R @ mu1)


def fit_with_orientations(corr: CorrespondenceSet, idx=None) -> SimilarityTransform:
    """Similarity from a set of shared cameras, rotation taken from their orientations.

    Each camera yields a relative rotation ``R2^T R1``; the rotation is their
    chordal mean (projected sum). The scale is the median distance ratio, which
    unlike a least-squares scale is not shrunk by noise in the frame-1 centers.
    The translation then matches the centroids.
    """
    if idx is None:
        idx = np.arange(len(corr))
    rel = np.einsum("nji,njk->nik", corr.R2[idx], corr.R1[idx])
    R = project_to_so3(rel.sum(axis=0))
    mu1, mu2 = corr.C1[idx].mean(axis=0), corr.C2[idx].mean(axis=0)
    s = 1.0 / relative_scale(corr.subset(idx))
    return SimilarityTransform(s, R, mu2 - s * R @ mu1)


def _residuals(T: SimilarityTransform, corr: CorrespondenceSet) -> np.ndarray:
    return np.linalg.norm(T.apply(corr.C1) - corr.C2, axis=1)


def _hypothesis(corr: CorrespondenceSet, i: int, j: int) -> Optional[SimilarityTransform]:
    d1 = np.linalg.norm(corr.C1[i] - corr.C1[j])
    d2 = np.linalg.norm(corr.C2[i] - corr.C2[j])
    if d1 <= 0 or d2 <= 0:
        return None
    s = d2 / d1
    R = corr.R2[i].T @ corr.R1[i]
    return SimilarityTransform(s, R, corr.C2[i] - s * R @ corr.C1[i])


def _median_rotation(corr: CorrespondenceSet, idx) -> np.ndarray:
    rel = np.einsum("nji,njk->nik", corr.R2[idx], corr.R1[idx])
    return project_to_so3(np.median(rel, axis=0))


def estimate_similarity(corr: CorrespondenceSet, params: RansacParams = RansacParams(),
                        scale_ref: Optional[float] = None) -> tuple[SimilarityTransform, list[int]]:
    """Robustly estimate the frame-1 to frame-2 similarity from shared cameras.

    Args:
        corr: shared cameras.
        params: RANSAC settings.
        scale_ref: frame-2 length used with ``params.threshold_ratio``; defaults
            to the bounding diameter of the frame-2 centers in ``corr``.

    Returns:
        The transform and the sorted image ids of the consensus set.

    Raises:
        InsufficientCorrespondencesError: fewer than ``params.min_inliers`` pairs.
        NoConsensusError: no hypothesis reached ``params.min_inliers`` inliers.
    """
    n = len(corr)
    if n < max(params.min_inliers, 2):
        raise InsufficientCorrespondencesError(f"need {params.min_inliers} correspondences, got {n}")
    if params.threshold is not None:
        eps = params.threshold
    else:
        ref = bounding_diameter(corr.C2) if scale_ref is None else scale_ref
        eps = params.threshold_ratio * ref

    rng = np.random.default_rng(params.seed)
    best_T, best_count, best_cost = None, -1, math.inf
    needed = params.max_iters
    it = 0
    while it < min(needed, params.max_iters):
        it += 1
        i, j = rng.choice(n, size=2, replace=False)
        T = _hypothesis(corr, int(i), int(j))
        if T is None:
            continue
        res = _residuals(T, corr)
        mask = res <= eps
        count = int(mask.sum())
        cost = float(res[mask].sum())
        if count > best_count or (count == best_count and cost < best_cost):
            best_T, best_count, best_cost = T, count, cost
            w = count / n
            if w >= 1.0:
                needed = it
            elif w > 0:
                denom = math.log(1.0 - w * w)
                if denom < 0:
                    needed = min(params.max_iters, math.ceil(math.log(1.0 - params.confidence) / denom))

    if best_T is None or best_count < params.min_inliers:
        raise NoConsensusError(f"best consensus {max(best_count, 0)} < {params.min_inliers}")

    best_inliers = np.flatnonzero(_residuals(best_T, corr) <= eps)
    T, inliers, eps_used = best_T, best_inliers, eps
    for _ in range(params.refit_iters):
        if params.refit == "orientations":
            try:
                refit = fit_with_orientations(corr, inliers)
            except AlignmentError:
                break
        else:
            refit = umeyama(corr.C1[inliers], corr.C2[inliers])
            ref_R = _median_rotation(corr, inliers)
            if np.degrees(angle_between(refit.R, ref_R)) > MAX_REFIT_ROTATION_DEG:
                logger.debug("refit rotation disagrees with camera orientations; keeping previous")
                break
        res = _residuals(refit, corr)
        if params.adaptive_factor > 0:
            eps_used = max(eps, params.adaptive_factor * float(np.median(res)))
        new_inliers = np.flatnonzero(res <= eps_used)
        if len(new_inliers) < params.min_inliers:
            break
        T = refit
        if np.array_equal(new_inliers, inliers):
            break
        inliers = new_inliers
    inliers = np.flatnonzero(_residuals(T, corr) <= eps_used)
    if len(inliers) < params.min_inliers:
        T, inliers = best_T, best_inliers
    return T, [corr.ids[k] for k in inliers]


def apply_similarity(T: SimilarityTransform, rec: Reconstruction) -> Reconstruction:
    """Express ``rec`` in the target frame of ``T``."""
    cams = tuple(
        CameraPose.from_rotation(c.image_id, c.R @ T.R.T, T.apply(c.C)) for c in rec.cameras
    )
    pts = tuple(ScenePoint(p.id, T.apply(p.xyz), p.obs) for p in rec.points)
    return Reconstruction(cams, pts, rec.cluster_id)


def mse(T: SimilarityTransform, X1, X2) -> float:
    """Directed residual ``(1 / 2n) * sqrt(sum ||T X1_i - X2_i||^2)``."""
    X1 = np.asarray(X1, dtype=float).reshape(-1, 3)
    X2 = np.asarray(X2, dtype=float).reshape(-1, 3)
    n = len(X1)
    if n < 1:
        raise ValueError("mse needs at least one point pair")
    r2 = ((T.apply(X1) - X2) ** 2).sum()
    return float(np.sqrt(r2) / (2 * n))


def msd(mse_12: float, mse_21: float) -> float:
    if mse_12 < 0 or mse_21 < 0:
        raise ValueError("mse values must be non-negative")
    return max(mse_12, mse_21)
