"""Camera poses and (local or merged) reconstructions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .rotation import matrix_to_quat, quat_to_matrix

PointId = Union[int, str]


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera rotation (stored as a unit quaternion) and camera center.

    The translation of the usual ``x_cam = R X + t`` form is ``t = -R C``.
    """

    image_id: int
    q: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-9:
            raise ValueError(f"camera {self.image_id}: quaternion is not unit norm (|q| = {n})")
        if abs(n - 1.0) > 1e-12:
            q = q / n
        if q[0] < 0:
            q = -q
        C = np.asarray(self.C, dtype=float).reshape(3)
        if not np.all(np.isfinite(C)):
            raise ValueError(f"camera {self.image_id}: non-finite center")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "C", C)

    @classmethod
    def from_rotation(cls, image_id: int, R, C) -> "CameraPose":
        return cls(int(image_id), matrix_to_quat(R), C)

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    @property
    def t(self) -> np.ndarray:
        return -self.R @ self.C

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return (self.image_id == other.image_id and np.array_equal(self.q, other.q)
                and np.array_equal(self.C, other.C))

    def __hash__(self):
        return hash(self.image_id)


@dataclass(frozen=True, eq=False)
class ScenePoint:
    id: PointId
    xyz: np.ndarray
    obs: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "xyz", np.asarray(self.xyz, dtype=float).reshape(3))
        object.__setattr__(self, "obs", tuple(int(o) for o in self.obs))

    def __eq__(self, other):
        if not isinstance(other, ScenePoint):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.xyz, other.xyz) and self.obs == other.obs


@dataclass(frozen=True)
class Reconstruction:
    """Camera poses plus optional 3D points in one coordinate frame.

    ``cluster_id`` is set for local reconstructions and ``None`` for merged or
    ground-truth models.
    """

    cameras: tuple[CameraPose, ...]
    points: tuple[ScenePoint, ...] = ()
    cluster_id: Optional[int] = None
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        object.__setattr__(self, "points", tuple(self.points))
        index = {}
        for i, cam in enumerate(self.cameras):
            if cam.image_id in index:
                raise ValueError(f"duplicate image id {cam.image_id} in reconstruction")
            index[cam.image_id] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.cameras)

    @property
    def image_ids(self) -> list[int]:
        return [c.image_id for c in self.cameras]

    def camera(self, image_id: int) -> CameraPose:
        return self.cameras[self._index[image_id]]

    def __contains__(self, image_id) -> bool:
        return image_id in self._index

    def centers(self) -> np.ndarray:
        return np.array([c.C for c in self.cameras]).reshape(-1, 3)

    def rotations(self) -> np.ndarray:
        return np.array([c.R for c in self.cameras]).reshape(-1, 3, 3)

    def diameter(self) -> float:
        return bounding_diameter(self.centers())


LocalReconstruction = Reconstruction


def bounding_diameter(points) -> float:
    """Diagonal of the axis-aligned bounding box."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return 0.0
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
