"""Pipeline configuration: a flat ``key = value`` file overridable from the command line."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .clustering import ClusteringParams
from .merge import MergeParams
from .scene import LAYOUTS, NoiseModel
from .sim3 import RansacParams


class ConfigError(ValueError):
    pass


def _opt_int(v: str) -> Optional[int]:
    return None if v.lower() in ("", "none", "auto") else int(v)


def _opt_str(v: str) -> Optional[str]:
    return None if v.lower() in ("", "none") else v


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# key -> (parser, default, help)
OPTIONS: dict[str, tuple[Any, Any, str]] = {
    "max_cluster_size": (int, 100, "maximum images per cluster before expansion"),
    "completeness": (float, 0.7, "required per-cluster overlap ratio"),
    "max_overlap": (int, 10, "lost edges applied per spanning-tree cluster pair"),
    "size_slack": (float, 0.3, "allowed growth above max-cluster-size during expansion"),
    "max_random_rounds": (_opt_int, None, "random expansion rounds (default 10 x clusters)"),
    "ransac_threshold": (float, 0.01, "inlier distance as a fraction of the target frame's diameter"),
    "ransac_iters": (int, 1000, "maximum RANSAC iterations"),
    "ransac_confidence": (float, 0.999, "RANSAC early-exit confidence"),
    "ransac_refit": (str, "orientations", "consensus refit: orientations or centers"),
    "ransac_adaptive": (float, 2.5, "adaptive inlier threshold factor (0 disables)"),
    "msd_reject": (float, 0.05, "drop merge edges with normalized MSD above this"),
    "jobs": (int, 1, "parallel local solves"),
    "seed": (int, 0, "master random seed"),
    "solver": (str, "synthetic", "local solver: synthetic or external"),
    "solver_cmd": (_opt_str, None, "external solver command template with {cluster-file} and {output-file}"),
    "sigma_center": (float, 0.0, "synthetic center noise, fraction of scene diameter"),
    "sigma_rot_deg": (float, 0.0, "synthetic rotation noise in degrees"),
    "outlier_fraction": (float, 0.0, "fraction of cameras replaced by random poses per cluster"),
    "gauge": (_bool, True, "apply a random similarity gauge per cluster"),
    "cost_per_image_sq": (float, 0.0, "synthetic solver sleeps this many seconds times size^2"),
    "layout": (str, "orbit", f"simulated layout: {', '.join(LAYOUTS)}"),
    "cameras": (int, 200, "simulated camera count"),
    "points": (int, 500, "simulated point count"),
    "covis": (float, 0.2, "covisibility distance as a fraction of scene diameter"),
    "scene": (_opt_str, None, "ground-truth scene JSON (enables the synthetic solver and evaluation)"),
    "match_graph": (_opt_str, None, "match graph text file"),
    "output": (str, "out", "output directory"),
}


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = normalize_key(key)
        if key not in OPTIONS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = OPTIONS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
    return values


def read_config(path) -> dict[str, Any]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), str(path))


@dataclass
class PipelineConfig:
    clustering: ClusteringParams = field(default_factory=ClusteringParams)
    merge: MergeParams = field(default_factory=MergeParams)
    noise: NoiseModel = field(default_factory=NoiseModel)
    solver: str = "synthetic"
    solver_cmd: Optional[str] = None
    jobs: int = 1
    seed: int = 0
    cost_per_image_sq: float = 0.0
    scene: Optional[Path] = None
    match_graph: Optional[Path] = None
    output: Path = Path("out")
    layout: str = "orbit"
    cameras: int = 200
    points: int = 500
    covis: float = 0.2

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.solver not in ("synthetic", "external"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.solver == "external" and not self.solver_cmd:
            raise ConfigError("the external solver needs solver_cmd")
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}")

    @classmethod
    def from_values(cls, values: dict[str, Any]) -> "PipelineConfig":
        v = {k: d for k, (_, d, _) in OPTIONS.items()}
        unknown = set(values) - set(v)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        v.update(values)
        try:
            clustering = ClusteringParams(
                max_cluster_size=v["max_cluster_size"], completeness=v["completeness"],
                max_overlap=v["max_overlap"], size_slack=v["size_slack"], seed=v["seed"],
                max_random_rounds=v["max_random_rounds"],
            )
            ransac = RansacParams(
                threshold_ratio=v["ransac_threshold"], max_iters=v["ransac_iters"],
                confidence=v["ransac_confidence"], seed=v["seed"], refit=v["ransac_refit"],
                adaptive_factor=v["ransac_adaptive"],
            )
            noise = NoiseModel(v["sigma_center"], v["sigma_rot_deg"], v["outlier_fraction"], v["gauge"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if ransac.refit not in ("orientations", "centers"):
            raise ConfigError(f"unknown ransac_refit {ransac.refit!r}")
        return cls(
            clustering=clustering,
            merge=MergeParams(ransac=ransac, msd_reject=v["msd_reject"]),
            noise=noise,
            solver=v["solver"],
            solver_cmd=v["solver_cmd"],
            jobs=v["jobs"],
            seed=v["seed"],
            cost_per_image_sq=v["cost_per_image_sq"],
            scene=Path(v["scene"]) if v["scene"] else None,
            match_graph=Path(v["match_graph"]) if v["match_graph"] else None,
            output=Path(v["output"]),
            layout=v["layout"],
            cameras=v["cameras"],
            points=v["points"],
            covis=v["covis"],
        )

    def to_values(self) -> dict[str, Any]:
        c, r, n = self.clustering, self.merge.ransac, self.noise
        return {
            "max_cluster_size": c.max_cluster_size, "completeness": c.completeness,
            "max_overlap": c.max_overlap, "size_slack": c.size_slack,
            "max_random_rounds": c.max_random_rounds, "ransac_threshold": r.threshold_ratio,
            "ransac_iters": r.max_iters, "ransac_confidence": r.confidence, "ransac_refit": r.refit,
            "ransac_adaptive": r.adaptive_factor, "msd_reject": self.merge.msd_reject,
            "jobs": self.jobs, "seed": self.seed, "solver": self.solver, "solver_cmd": self.solver_cmd,
            "sigma_center": n.sigma_center, "sigma_rot_deg": n.sigma_rot_deg,
            "outlier_fraction": n.outlier_fraction, "gauge": n.gauge,
            "cost_per_image_sq": self.cost_per_image_sq, "layout": self.layout, "cameras": self.cameras,
            "points": self.points, "covis": self.covis,
            "scene": str(self.scene) if self.scene else None,
            "match_graph": str(self.match_graph) if self.match_graph else None,
            "output": str(self.output),
        }

