"""End-to-end orchestration: cluster, solve clusters in parallel, merge, evaluate."""

from __future__ import annotations

import csv
import io as _io
import logging
import shlex
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from . import io
from .clustering import ClusterSet, cluster_images
from .config import PipelineConfig
from .graph import WeightedGraph
from .merge import MergedModel, MergeGraph, build_merge_graph, merge_all
from .reconstruction import Reconstruction
from .scene import (
    GroundTruthScene,
    derive_match_graph,
    evaluate_against_gt,
    generate_scene,
    injected_outliers,
    solve_cluster_synthetic,
)

logger = logging.getLogger(__name__)

Solver = Callable[[int, frozenset, int], Reconstruction]


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class SolveError(RuntimeError):
    pass


def cluster_seed(seed: int, cluster_id: int) -> int:
    return int(np.random.SeedSequence([seed, 0x5F3759DF, cluster_id]).generate_state(1)[0])


@dataclass
class SyntheticSolver:
    scene: GroundTruthScene
    noise: object
    cost_per_image_sq: float = 0.0

    def __call__(self, cluster_id: int, images: frozenset, seed: int) -> Reconstruction:
        return solve_cluster_synthetic(self.scene, images, self.noise, seed=seed, cluster_id=cluster_id,
                                       cost_per_image_sq=self.cost_per_image_sq)


@dataclass
class ExternalCommandSolver:
    """Runs a command per cluster.

    ``{cluster-file}`` in the template is replaced by a JSON file holding
    ``{"cluster_id", "images", "seed"}``; the command must write a reconstruction
    to ``{output-file}``.
    """

    template: str
    workdir: Path
    timeout: Optional[float] = None

    def __call__(self, cluster_id: int, images: frozenset, seed: int) -> Reconstruction:
        self.workdir.mkdir(parents=True, exist_ok=True)
        cluster_file = self.workdir / f"cluster_{cluster_id:04d}.in.json"
        output_file = self.workdir / f"cluster_{cluster_id:04d}.out.json"
        io.write_json(cluster_file, {"cluster_id": cluster_id, "images": sorted(images), "seed": seed})
        if output_file.exists():
            output_file.unlink()
        cmd = (self.template.replace("{cluster-file}", shlex.quote(str(cluster_file)))
               .replace("{output-file}", shlex.quote(str(output_file))))
        proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True, timeout=self.timeout)
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout).strip().splitlines()[-3:]
            raise SolveError(f"command exited with status {proc.returncode}: {' | '.join(tail)}")
        if not output_file.exists():
            raise SolveError("command did not write the output file")
        rec = io.read_reconstruction(output_file)
        stray = sorted(set(rec.image_ids) - set(images))
        if stray:
            raise SolveError(f"output contains images outside the cluster: {stray[:10]}")
        return Reconstruction(rec.cameras, rec.points, cluster_id)


@dataclass
class SolveResult:
    reconstructions: list[Reconstruction]
    failures: dict[int, str]
    timings: dict[int, float]


def dispatch_local_solves(clusters: Iterable[tuple[int, frozenset]], solver: Solver, jobs: int = 1,
                          seeds: Optional[dict[int, int]] = None) -> SolveResult:
    """Solve every cluster with at most ``jobs`` solves in flight.

    Results are ordered by cluster id whatever order the solves finish in. A
    failing cluster is recorded in ``failures`` and left out.
    """
    clusters = sorted(clusters, key=lambda c: c[0])
    if not clusters:
        raise ValueError("no clusters to solve")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    seeds = seeds or {}

    def run(item):
        cid, images = item
        t0 = time.perf_counter()
        try:
            rec = solver(cid, images, seeds.get(cid, cid))
            err = None
        except Exception as exc:  # noqa: BLE001 - any solver failure only drops this cluster
            rec, err = None, f"{type(exc).__name__}: {exc}"
        return cid, rec, err, time.perf_counter() - t0

    if jobs == 1:
        results = [run(c) for c in clusters]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, clusters))
    recons, failures, timings = [], {}, {}
    for cid, rec, err, dt in sorted(results, key=lambda r: r[0]):
        timings[cid] = dt
        if err is not None:
            logger.warning("cluster %d failed: %s", cid, err)
            failures[cid] = err
        elif len(rec) == 0:
            failures[cid] = "empty reconstruction"
        else:
            recons.append(rec)
    return SolveResult(recons, failures, timings)


@dataclass
class RunReport:
    timings: dict[str, float] = field(default_factory=dict)
    solve_timings: dict[int, float] = field(default_factory=dict)
    clusters: list[dict] = field(default_factory=list)
    clustering: dict = field(default_factory=dict)
    failed_clusters: dict[int, str] = field(default_factory=dict)
    merge_edges: list[dict] = field(default_factory=list)
    models: list[dict] = field(default_factory=list)
    anchor: Optional[int] = None
    unmerged_images: list[int] = field(default_factory=list)
    metrics: Optional[dict] = None
    artifacts: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "timings": self.timings,
            "solve_timings": {str(k): v for k, v in sorted(self.solve_timings.items())},
            "clustering": self.clustering,
            "clusters": self.clusters,
            "failed_clusters": {str(k): v for k, v in sorted(self.failed_clusters.items())},
            "merge_edges": self.merge_edges,
            "models": self.models,
            "anchor": self.anchor,
            "unmerged_images": self.unmerged_images,
            "metrics": self.metrics,
            "artifacts": self.artifacts,
        }


def plan_to_json(model: MergedModel) -> dict:
    plan = model.plan
    return {
        "anchor": plan.anchor,
        "clusters": sorted(plan.tree.nodes),
        "tree_edges": [[a, b, w] for a, b, w, _ in plan.tree.edges],
        "layers": [sorted(layer) for layer in plan.layers],
        "depth": {str(k): v for k, v in sorted(plan.depth.items())},
        "to_anchor": {
            str(k): {"s": T.s, "R": T.R.tolist(), "t": T.t.tolist()}
            for k, T in sorted(plan.to_anchor.items())
        },
    }


def merge_edge_table(mg: MergeGraph, models: list[MergedModel]) -> list[dict]:
    in_tree = {(a, b) for m in models for a, b, _, _ in m.plan.tree.edges}
    rows = []
    for (k1, k2), e in sorted(mg.edges.items()):
        rows.append({"pair": [k1, k2], "common": e.common, "inliers": len(e.inliers), "msd": e.weight,
                     "in_minst": (k1, k2) in in_tree, "status": "kept"})
    for k1, k2, reason in sorted(mg.rejected):
        rows.append({"pair": [k1, k2], "common": None, "inliers": 0, "msd": None, "in_minst": False,
                     "status": f"rejected: {reason}"})
    rows.sort(key=lambda r: r["pair"])
    return rows


def timings_csv(report: RunReport) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "seconds"])
    for stage, sec in report.timings.items():
        w.writerow([stage, f"{sec:.6f}"])
    for cid, sec in sorted(report.solve_timings.items()):
        w.writerow([f"solve:{cid}", f"{sec:.6f}"])
    return buf.getvalue()


def _stage(name: str):
    class _Guard:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
            return False

    return _Guard()


def load_inputs(config: PipelineConfig, out: Path) -> tuple[WeightedGraph, Optional[GroundTruthScene], dict]:
    artifacts = {}
    scene = None
    if config.scene is not None:
        scene = io.read_scene(config.scene)
    elif config.match_graph is None:
        scene = generate_scene(config.layout, config.cameras, config.points, config.seed)
        io.write_scene(out / "scene.json", scene)
        artifacts["scene"] = "scene.json"
    if config.match_graph is not None:
        graph = io.read_match_graph(config.match_graph)
    else:
        graph = derive_match_graph(scene, covis=config.covis)
        io.write_match_graph(out / "match_graph.txt", graph)
        artifacts["match_graph"] = "match_graph.txt"
    return graph, scene, artifacts


def make_solver(config: PipelineConfig, scene: Optional[GroundTruthScene], out: Path) -> Solver:
    if config.solver == "external":
        return ExternalCommandSolver(config.solver_cmd, out / "solver_io")
    if scene is None:
        raise StageError("solve", "the synthetic solver needs a ground-truth scene")
    return SyntheticSolver(scene, config.noise, config.cost_per_image_sq)


def cluster_report(cs: ClusterSet) -> tuple[list[dict], dict]:
    rows = [
        {"cluster_id": k, "size": len(c), "completeness": cs.completeness(k),
         "satisfied": k not in cs.unsatisfied}
        for k, c in enumerate(cs.clusters)
    ]
    summary = {"count": len(cs), "stop_reason": cs.stop_reason, "random_rounds": cs.random_rounds,
               "unsatisfied": list(cs.unsatisfied), "oversize": list(cs.oversize)}
    return rows, summary


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Run every stage and write all artifacts under ``config.output``.

    Raises:
        StageError: a stage failed; artifacts written so far are kept.
    """
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport()
    t_start = time.perf_counter()

    # bad inputs propagate as FormatError / OSError rather than a stage failure
    graph, scene, arts = load_inputs(config, out)
    report.artifacts.update(arts)

    t0 = time.perf_counter()
    with _stage("cluster"):
        cs = cluster_images(graph, config.clustering)
        io.write_clusters(out / "clusters.json", cs)
        report.artifacts["clusters"] = "clusters.json"
    report.timings["cluster"] = time.perf_counter() - t0
    report.clusters, report.clustering = cluster_report(cs)

    t0 = time.perf_counter()
    with _stage("solve"):
        solver = make_solver(config, scene, out)
        items = list(enumerate(cs.clusters))
        seeds = {cid: cluster_seed(config.seed, cid) for cid, _ in items}
        solved = dispatch_local_solves(items, solver, config.jobs, seeds)
        for rec in solved.reconstructions:
            io.write_reconstruction(out / "reconstructions" / f"cluster_{rec.cluster_id:04d}.json", rec)
        report.failed_clusters = solved.failures
        report.solve_timings = solved.timings
        if not solved.reconstructions:
            raise StageError("solve", "every cluster failed")
    report.timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage("merge"):
        mg = build_merge_graph(solved.reconstructions, config.merge)
        models = merge_all(solved.reconstructions, config.merge, merge_graph=mg)
        for i, m in enumerate(models):
            io.write_reconstruction(out / "merged" / f"model_{i:03d}.json", m.reconstruction)
        io.write_json(out / "merge_plan.json", [plan_to_json(m) for m in models])
        report.artifacts["merged"] = "merged/"
        report.artifacts["merge_plan"] = "merge_plan.json"
    report.timings["merge"] = time.perf_counter() - t0
    report.merge_edges = merge_edge_table(mg, models)
    report.models = [
        {"model": i, "anchor": m.plan.anchor, "clusters": sorted(m.plan.tree.nodes),
         "cameras": len(m.reconstruction), "points": len(m.reconstruction.points)}
        for i, m in enumerate(models)
    ]
    report.anchor = models[0].plan.anchor
    report.unmerged_images = sorted(set(graph.nodes) - set(models[0].reconstruction.image_ids))

    if scene is not None:
        t0 = time.perf_counter()
        with _stage("evaluate"):
            exclude = set()
            if config.solver == "synthetic" and config.noise.outlier_fraction > 0:
                corrupted = {k: injected_outliers(cs.clusters[k], config.noise, seeds[k])
                             for k in set(models[0].source.values())}
                exclude = {img for img, k in models[0].source.items() if img in corrupted[k]}
            metrics = evaluate_against_gt(models[0].reconstruction, scene, exclude=exclude)
            metrics["excluded_corrupted"] = len(exclude)
            report.metrics = metrics
        report.timings["evaluate"] = time.perf_counter() - t0

    report.timings["total"] = time.perf_counter() - t_start
    io.write_json(out / "report.json", report.to_dict())
    (out / "timings.csv").write_text(timings_csv(report), encoding="utf-8")
    report.artifacts["report"] = "report.json"
    return report
