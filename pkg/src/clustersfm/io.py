"""Readers and writers for the on-disk formats.

* match graph: UTF-8 text, one edge per line ``id_a id_b weight``; ``#`` starts a
  comment; a line holding a single id declares an isolated image.
* clusters: JSON list of ``{"cluster_id": int, "images": [ids]}``.
* reconstruction / scene: JSON ``{"cluster_id"?, "cameras": [{"image_id", "q": [w, x, y, z],
  "C": [x, y, z]}], "points": [{"id", "xyz", "obs"}]}``; scenes add ``layout`` and ``seed``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Union

import numpy as np

from .clustering import ClusterSet
from .graph import GraphError, WeightedGraph, build_graph
from .reconstruction import CameraPose, Reconstruction, ScenePoint
from .scene import GroundTruthScene

PathLike = Union[str, Path]

QUAT_TOLERANCE = 1e-6


class FormatError(ValueError):
    """Malformed input; the message names the file and the line or field."""


def _num(x) -> Union[int, float]:
    if isinstance(x, (np.integer,)):
        return int(x)
    return float(x)


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: PathLike, obj: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(obj), encoding="utf-8")


def _load_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None


# ---------------------------------------------------------------------------
# match graph
# ---------------------------------------------------------------------------


def parse_match_graph(text: str, source: str = "<string>") -> WeightedGraph:
    edges, nodes = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            if len(fields) == 1:
                nodes.append(_parse_id(fields[0]))
                continue
            if len(fields) != 3:
                raise ValueError(f"expected 'id_a id_b weight', got {len(fields)} fields")
            a, b = _parse_id(fields[0]), _parse_id(fields[1])
            w = float(fields[2])
            if not math.isfinite(w) or w < 0:
                raise ValueError(f"invalid weight {fields[2]!r}")
            if a == b:
                raise ValueError(f"self-loop on image {a}")
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}") from None
        edges.append((a, b, w))
    try:
        return build_graph(edges, nodes=nodes)
    except GraphError as exc:
        raise FormatError(f"{source}: {exc}") from None


def _parse_id(tok: str) -> int:
    v = int(tok)
    if v < 0:
        raise ValueError(f"image id must be non-negative, got {v}")
    return v


def read_match_graph(path: PathLike) -> WeightedGraph:
    return parse_match_graph(Path(path).read_text(encoding="utf-8"), str(path))


def format_match_graph(g: WeightedGraph) -> str:
    lines = ["# id_a id_b weight"]
    linked = set()
    for a, b, w, _ in g.edges:
        linked.update((a, b))
        lines.append(f"{a} {b} {_fmt_weight(w)}")
    lines.extend(str(n) for n in sorted(g.nodes - linked))
    return "\n".join(lines) + "\n"


def _fmt_weight(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def write_match_graph(path: PathLike, g: WeightedGraph) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(format_match_graph(g), encoding="utf-8")


# ---------------------------------------------------------------------------
# clusters
# ---------------------------------------------------------------------------


def clusters_to_json(clusters: Union[ClusterSet, Iterable[Iterable[int]]]) -> list:
    items = clusters.clusters if isinstance(clusters, ClusterSet) else clusters
    return [{"cluster_id": k, "images": sorted(int(i) for i in c)} for k, c in enumerate(items)]


def write_clusters(path: PathLike, clusters) -> None:
    write_json(path, clusters_to_json(clusters))


def read_clusters(path: PathLike) -> list[tuple[int, frozenset[int]]]:
    data = _load_json(path)
    if not isinstance(data, list):
        raise FormatError(f"{path}: expected a JSON list of clusters")
    out, seen = [], set()
    for i, item in enumerate(data):
        where = f"{path}: [{i}]"
        if not isinstance(item, dict) or "cluster_id" not in item or "images" not in item:
            raise FormatError(f"{where}: expected {{cluster_id, images}}")
        cid = item["cluster_id"]
        if not isinstance(cid, int) or isinstance(cid, bool) or cid < 0:
            raise FormatError(f"{where}.cluster_id: expected a non-negative integer")
        if cid in seen:
            raise FormatError(f"{where}.cluster_id: duplicate id {cid}")
        seen.add(cid)
        imgs = item["images"]
        if not isinstance(imgs, list) or not all(isinstance(x, int) and x >= 0 for x in imgs):
            raise FormatError(f"{where}.images: expected a list of non-negative integers")
        out.append((cid, frozenset(imgs)))
    return out


# ---------------------------------------------------------------------------
# reconstructions and scenes
# ---------------------------------------------------------------------------


def _vec(x: np.ndarray) -> list[float]:
    return [float(v) for v in x]


def reconstruction_to_json(rec: Reconstruction) -> dict:
    out: dict[str, Any] = {}
    if rec.cluster_id is not None:
        out["cluster_id"] = rec.cluster_id
    out["cameras"] = [{"image_id": c.image_id, "q": _vec(c.q), "C": _vec(c.C)} for c in rec.cameras]
    out["points"] = [{"id": p.id, "xyz": _vec(p.xyz), "obs": list(p.obs)} for p in rec.points]
    return out


def reconstruction_from_json(data: Any, source: str = "<json>") -> Reconstruction:
    if not isinstance(data, dict) or "cameras" not in data:
        raise FormatError(f"{source}: expected an object with 'cameras'")
    cid = data.get("cluster_id")
    if cid is not None and (not isinstance(cid, int) or isinstance(cid, bool)):
        raise FormatError(f"{source}: cluster_id: expected an integer")
    cams = []
    for i, cam in enumerate(data["cameras"]):
        where = f"{source}: cameras[{i}]"
        if not isinstance(cam, dict):
            raise FormatError(f"{where}: expected an object")
        img = cam.get("image_id")
        if not isinstance(img, int) or isinstance(img, bool) or img < 0:
            raise FormatError(f"{where}.image_id: expected a non-negative integer")
        q = _float_list(cam.get("q"), 4, f"{where}.q")
        C = _float_list(cam.get("C"), 3, f"{where}.C")
        n = math.sqrt(sum(v * v for v in q))
        if abs(n - 1.0) > QUAT_TOLERANCE:
            raise FormatError(f"{where}.q: quaternion norm {n:.9g} is not 1")
        if abs(n - 1.0) > 1e-12:
            q = [v / n for v in q]
        cams.append(CameraPose(img, np.array(q), np.array(C)))
    pts = []
    for i, p in enumerate(data.get("points", [])):
        where = f"{source}: points[{i}]"
        if not isinstance(p, dict) or "id" not in p:
            raise FormatError(f"{where}: expected an object with 'id'")
        pid = p["id"]
        if not isinstance(pid, (int, str)) or isinstance(pid, bool):
            raise FormatError(f"{where}.id: expected an integer or string")
        xyz = _float_list(p.get("xyz"), 3, f"{where}.xyz")
        obs = p.get("obs", [])
        if not isinstance(obs, list) or not all(isinstance(o, int) for o in obs):
            raise FormatError(f"{where}.obs: expected a list of image ids")
        pts.append(ScenePoint(pid, np.array(xyz), tuple(obs)))
    try:
        return Reconstruction(cams, pts, cid)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None


def _float_list(v, n: int, where: str) -> list[float]:
    if not isinstance(v, list) or len(v) != n:
        raise FormatError(f"{where}: expected a list of {n} numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise FormatError(f"{where}: expected finite numbers, got {x!r}")
        out.append(float(x))
    return out


def write_reconstruction(path: PathLike, rec: Reconstruction) -> None:
    write_json(path, reconstruction_to_json(rec))


def read_reconstruction(path: PathLike) -> Reconstruction:
    return reconstruction_from_json(_load_json(path), str(path))


def scene_to_json(scene: GroundTruthScene) -> dict:
    out = reconstruction_to_json(scene.cameras)
    out["points"] = [{"id": i, "xyz": _vec(p), "obs": []} for i, p in enumerate(scene.points)]
    return {"layout": scene.layout, "seed": scene.seed, **out}


def write_scene(path: PathLike, scene: GroundTruthScene) -> None:
    write_json(path, scene_to_json(scene))


def read_scene(path: PathLike) -> GroundTruthScene:
    data = _load_json(path)
    rec = reconstruction_from_json(data, str(path))
    pts = np.array([p.xyz for p in rec.points]).reshape(-1, 3)
    try:
        return GroundTruthScene(Reconstruction(rec.cameras), pts, str(data.get("layout", "unknown")),
                                int(data.get("seed", 0)))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
