"""Command-line entry point.

Exit status: 0 on success, 1 when a pipeline stage fails, 2 for bad input or
configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from io import StringIO
from pathlib import Path
from typing import Any, Optional, Sequence

from . import io
from .clustering import cluster_images
from .config import OPTIONS, ConfigError, PipelineConfig, read_config
from .merge import build_merge_graph, merge_all
from .pipeline import (
    StageError,
    dispatch_local_solves,
    cluster_seed,
    make_solver,
    merge_edge_table,
    plan_to_json,
    run_pipeline,
)
from .scene import derive_match_graph, evaluate_against_gt, generate_scene

logger = logging.getLogger("clustersfm")

EXIT_OK, EXIT_STAGE, EXIT_INPUT = 0, 1, 2

CLUSTER_KEYS = ("max_cluster_size", "completeness", "max_overlap", "size_slack", "max_random_rounds")
MERGE_KEYS = ("ransac_threshold", "ransac_iters", "ransac_confidence", "ransac_refit", "ransac_adaptive",
              "msd_reject")
SOLVE_KEYS = ("jobs", "solver", "solver_cmd", "sigma_center", "sigma_rot_deg", "outlier_fraction", "gauge",
              "cost_per_image_sq")
SIM_KEYS = ("layout", "cameras", "points", "covis")


def _add_options(p: argparse.ArgumentParser, keys: Sequence[str]) -> None:
    for key in keys:
        parser, default, help_ = OPTIONS[key]
        # None means "not given" so config-file values survive
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=parser, default=None,
                       help=f"{help_} (default: {default})")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value file; command-line flags win")
    p.add_argument("--seed", type=int, default=None, help="master random seed (default: 0)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clustersfm", description="Divide-and-conquer structure-from-motion toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a ground-truth scene and its match graph")
    _common(p)
    _add_options(p, SIM_KEYS)
    p.add_argument("-o", "--output", type=Path, required=True, help="output directory")

    p = sub.add_parser("cluster", help="partition a match graph into overlapping clusters")
    _common(p)
    _add_options(p, CLUSTER_KEYS)
    p.add_argument("--match-graph", type=Path, required=True)
    p.add_argument("-o", "--output", type=Path, required=True, help="clusters JSON file")

    p = sub.add_parser("solve", help="reconstruct every cluster")
    _common(p)
    _add_options(p, SOLVE_KEYS)
    p.add_argument("--clusters", type=Path, required=True)
    p.add_argument("--scene", type=Path, help="ground truth for the synthetic solver")
    p.add_argument("-o", "--output", type=Path, required=True, help="directory for cluster reconstructions")

    p = sub.add_parser("merge", help="merge cluster reconstructions")
    _common(p)
    _add_options(p, MERGE_KEYS)
    p.add_argument("reconstructions", type=Path, nargs="+")
    p.add_argument("-o", "--output", type=Path, required=True, help="output directory")

    p = sub.add_parser("evaluate", help="compare a model with ground truth")
    p.add_argument("model", type=Path)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _common(p)
    _add_options(p, CLUSTER_KEYS + MERGE_KEYS + SOLVE_KEYS + SIM_KEYS)
    p.add_argument("--scene", type=Path)
    p.add_argument("--match-graph", type=Path)
    p.add_argument("-o", "--output", type=Path)

    p = sub.add_parser("report", help="summarize a pipeline run directory")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def load_config(args: argparse.Namespace) -> PipelineConfig:
    values: dict[str, Any] = {}
    if getattr(args, "config", None) is not None:
        values.update(read_config(args.config))
    for key in OPTIONS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = str(v) if isinstance(v, Path) else v
    return PipelineConfig.from_values(values)


def cmd_simulate(args, cfg: PipelineConfig) -> int:
    scene = generate_scene(cfg.layout, cfg.cameras, cfg.points, cfg.seed)
    graph = derive_match_graph(scene, covis=cfg.covis)
    io.write_scene(args.output / "scene.json", scene)
    io.write_match_graph(args.output / "match_graph.txt", graph)
    print(f"{len(scene)} cameras, {len(graph.edges)} matched pairs -> {args.output}")
    return EXIT_OK


def cmd_cluster(args, cfg: PipelineConfig) -> int:
    graph = io.read_match_graph(args.match_graph)
    cs = cluster_images(graph, cfg.clustering)
    io.write_clusters(args.output, cs)
    sizes = [len(c) for c in cs.clusters]
    print(f"{len(cs)} clusters, sizes {min(sizes)}..{max(sizes)}, stop={cs.stop_reason}, "
          f"unsatisfied={len(cs.unsatisfied)}")
    return EXIT_OK


def cmd_solve(args, cfg: PipelineConfig) -> int:
    clusters = io.read_clusters(args.clusters)
    scene = io.read_scene(args.scene) if args.scene else None
    try:
        solver = make_solver(cfg, scene, args.output)
    except StageError as exc:
        raise ConfigError(str(exc)) from None
    seeds = {cid: cluster_seed(cfg.seed, cid) for cid, _ in clusters}
    res = dispatch_local_solves(clusters, solver, cfg.jobs, seeds)
    for rec in res.reconstructions:
        io.write_reconstruction(args.output / f"cluster_{rec.cluster_id:04d}.json", rec)
    for cid, err in res.failures.items():
        print(f"cluster {cid} failed: {err}", file=sys.stderr)
    print(f"solved {len(res.reconstructions)}/{len(clusters)} clusters -> {args.output}")
    return EXIT_OK if res.reconstructions else EXIT_STAGE


def cmd_merge(args, cfg: PipelineConfig) -> int:
    recons = [io.read_reconstruction(p) for p in args.reconstructions]
    ids = [r.cluster_id for r in recons]
    if None in ids or len(set(ids)) != len(ids):
        raise ConfigError("every reconstruction needs a distinct cluster_id")
    mg = build_merge_graph(recons, cfg.merge)
    models = merge_all(recons, cfg.merge, merge_graph=mg)
    for i, m in enumerate(models):
        io.write_reconstruction(args.output / f"model_{i:03d}.json", m.reconstruction)
    io.write_json(args.output / "merge_plan.json", {
        "models": [plan_to_json(m) for m in models],
        "edges": merge_edge_table(mg, models),
    })
    print(f"{len(models)} model(s); largest has {len(models[0].reconstruction)} cameras, "
          f"anchor cluster {models[0].plan.anchor}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = io.read_reconstruction(args.model)
    scene = io.read_scene(args.scene)
    print(json.dumps(evaluate_against_gt(model, scene), indent=1))
    return EXIT_OK


def cmd_pipeline(args, cfg: PipelineConfig) -> int:
    report = run_pipeline(cfg)
    print(format_report(report.to_dict()))
    return EXIT_OK


def format_report(rep: dict) -> str:
    lines = []
    cl = rep.get("clustering", {})
    sizes = [c["size"] for c in rep.get("clusters", [])]
    if sizes:
        lines.append(f"clusters: {cl.get('count')} (sizes {min(sizes)}..{max(sizes)}), "
                     f"unsatisfied {len(cl.get('unsatisfied', []))}, stop={cl.get('stop_reason')}")
    if rep.get("failed_clusters"):
        lines.append(f"failed clusters: {', '.join(rep['failed_clusters'])}")
    edges = rep.get("merge_edges", [])
    kept = [e for e in edges if e["status"] == "kept"]
    lines.append(f"merge edges: {len(kept)} kept, {len(edges) - len(kept)} rejected, "
                 f"{sum(e['in_minst'] for e in kept)} in spanning tree")
    for m in rep.get("models", []):
        lines.append(f"model {m['model']}: {m['cameras']} cameras from {len(m['clusters'])} clusters, "
                     f"anchor {m['anchor']}")
    if rep.get("unmerged_images"):
        lines.append(f"images outside the largest model: {len(rep['unmerged_images'])}")
    met = rep.get("metrics")
    if met:
        lines.append(f"center RMSE {met['center_rmse']:.4g} x diameter, rotation mean "
                     f"{met['rotation_mean_deg']:.3g} deg, recovered {met['recovered_fraction']:.1%}")
    t = rep.get("timings", {})
    lines.append("timings: " + ", ".join(f"{k} {v:.2f}s" for k, v in t.items()))
    return "\n".join(lines)


def report_csv(rep: dict) -> str:
    """Cluster and merge-edge tables as CSV, separated by a blank line."""
    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cluster_id", "size", "completeness", "satisfied", "solve_seconds", "failed"])
    solve_t = rep.get("solve_timings", {})
    failed = rep.get("failed_clusters", {})
    for c in rep.get("clusters", []):
        cid = str(c["cluster_id"])
        w.writerow([cid, c["size"], f"{c['completeness']:.4f}", c["satisfied"],
                    f"{solve_t.get(cid, 0.0):.6f}", cid in failed])
    buf.write("\n")
    w.writerow(["k1", "k2", "common", "inliers", "msd", "in_minst", "status"])
    for e in rep.get("merge_edges", []):
        msd = "" if e["msd"] is None else f"{e['msd']:.6g}"
        common = "" if e["common"] is None else e["common"]
        w.writerow([*e["pair"], common, e["inliers"], msd, e["in_minst"], e["status"]])
    return buf.getvalue()


def cmd_report(args) -> int:
    path = args.run_dir / "report.json" if args.run_dir.is_dir() else args.run_dir
    rep = io._load_json(path)
    if args.format == "json":
        print(json.dumps(rep, indent=1))
    elif args.format == "csv":
        sys.stdout.write(report_csv(rep))
    else:
        print(format_report(rep))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "report":
            return cmd_report(args)
        cfg = load_config(args)
        handler = {"simulate": cmd_simulate, "cluster": cmd_cluster, "solve": cmd_solve,
                   "merge": cmd_merge, "pipeline": cmd_pipeline}[args.command]
        return handler(args, cfg)
    except StageError as exc:
        print(f"error: stage failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigError, io.FormatError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
