"""Command-line interface.

Subcommands mirror the pipeline stages so any stage can run standalone on
the previous stage's file artifacts; `pipeline` chains them all. With
`--figures`, report-style subcommands also render PNG figures next to
their delimited/JSON outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .core.io import load_sketch, save_sketch
from .core.synth import SynthConfig, synth_sketch
from .errors import SketchReconError
from .features import extract_features, features_from_csv, features_to_csv
from .forest import (ForestModel, ablation_run, grid_search_cv, predict)
from .pipeline import (clusters_from_dicts, load_curves, run_pipeline,
                       stage_cluster_scribbles, stage_cluster_shapes,
                       stage_consolidate, stage_predict, stage_surface,
                       stage_topology)
from .stats import significance_report
from .surfacing import assemble_mesh, write_obj
from .topology import CurveNetwork


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "unguided", False):
        cfg.unguided = True
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")


def cmd_synth(args) -> int:
    cfg = SynthConfig(object=args.object, jitter_sigma=args.jitter,
                      overdraw_count=args.overdraw,
                      seed=args.seed if args.seed is not None else 0,
                      scribble_overdraw=args.scribble_overdraw)
    sketch = synth_sketch(cfg)
    out = Path(args.out)
    if out.is_dir():
        out = out / "sketch.json"
    save_sketch(sketch, out)
    print(f"wrote {out} ({len(sketch)} strokes, scale "
          f"{sketch.scale:.2f})")
    return 0


def cmd_features(args) -> int:
    sketch = load_sketch(args.sketch)
    matrix = extract_features(sketch)
    features_to_csv(matrix, args.out)
    print(f"wrote {args.out} ({len(matrix)} rows"
          f"{', labeled' if matrix.labels is not None else ''})")
    return 0


def cmd_stats(args) -> int:
    matrix = features_from_csv(args.features)
    report = significance_report(matrix, alpha=args.alpha)
    out = _out_dir(args)
    (out / "stats.json").write_text(report.to_json(), encoding="utf-8")
    (out / "stats.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    print(report.to_text())
    if args.figures:
        from .report import save_feature_histograms, save_significance_figure
        save_significance_figure(report, out / "significance.png")
        save_feature_histograms(matrix, out / "feature_histograms.png")
        print(f"figures in {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    matrix = features_from_csv(args.features)
    model, entries = grid_search_cv(matrix, grid=cfg.grid(),
                                    folds=cfg.cv_folds, seed=cfg.seed,
                                    subset=args.subset, kind=args.model)
    model.save(args.out)
    best = max(entries, key=lambda e: e.mean_accuracy)
    print(f"wrote {args.out}: {args.model}/{args.subset}, "
          f"{len(entries)} grid points, best CV accuracy "
          f"{best.mean_accuracy * 100:.2f}%")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    matrix = features_from_csv(args.features)
    grid = cfg.grid() if not args.quick else {
        "n_trees": [100], "max_depth": [8], "min_samples_leaf": [1]}
    result = ablation_run(matrix, grid=grid, folds=cfg.cv_folds,
                          seed=cfg.seed)
    out = _out_dir(args)
    _dump({"rows": result.to_dicts()}, out / "ablation.json")
    lines = ["model,subset,split,accuracy,precision,recall"]
    for r in result.rows:
        lines.append(f"{r.model},{r.subset},{r.split},{r.accuracy:.4f},"
                     f"{r.precision:.4f},{r.recall:.4f}")
    (out / "ablation.csv").write_text("\n".join(lines) + "\n",
                                      encoding="utf-8")
    print(result.to_text())
    if args.figures:
        from .report import save_ablation_figure
        save_ablation_figure(result, out / "ablation.png")
        print(f"figure in {out}")
    return 0


def cmd_predict(args) -> int:
    sketch = load_sketch(args.sketch)
    model = ForestModel.load(args.model)
    doc = stage_predict(sketch, model)
    _dump(doc, Path(args.out))
    n_shape = sum(1 for v in doc["labels"] if v == 1)
    print(f"wrote {args.out}: {n_shape} boundary / "
          f"{len(doc['labels']) - n_shape} fill strokes")
    return 0


def _read_labels(path: str) -> list[int]:
    return json.loads(Path(path).read_text(encoding="utf-8"))["labels"]


def cmd_cluster_shape(args) -> int:
    cfg = _load_config(args)
    sketch = load_sketch(args.sketch)
    doc = stage_cluster_shapes(sketch, _read_labels(args.labels), cfg,
                               cfg.resolved_threads())
    _dump(doc, Path(args.out))
    n = len(set(doc["clusters"].values()))
    print(f"wrote {args.out}: {n} clusters at epsilon {doc['epsilon']:.4f}")
    return 0


def cmd_consolidate(args) -> int:
    cfg = _load_config(args)
    sketch = load_sketch(args.sketch)
    clusters = json.loads(Path(args.clusters).read_text(encoding="utf-8"))
    curves = stage_consolidate(sketch, clusters, cfg)
    _dump({"curves": [c.to_dict() for c in curves]}, Path(args.out))
    print(f"wrote {args.out}: {len(curves)} consolidated curves")
    return 0


def cmd_topology(args) -> int:
    cfg = _load_config(args)
    curves = load_curves(args.curves)
    network = stage_topology(curves, cfg)
    network.save(args.out)
    print(f"wrote {args.out}: {network.nodes.shape[0]} nodes, "
          f"{len(network.edges)} edges")
    for w in network.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_cluster_scribble(args) -> int:
    cfg = _load_config(args)
    sketch = load_sketch(args.sketch)
    clusters = stage_cluster_scribbles(sketch, _read_labels(args.labels),
                                       cfg, cfg.resolved_threads())
    _dump({"clusters": [c.to_dict() for c in clusters]}, Path(args.out))
    print(f"wrote {args.out}: {len(clusters)} scribble clusters")
    return 0


def cmd_surface(args) -> int:
    cfg = _load_config(args)
    sketch = load_sketch(args.sketch)
    network = CurveNetwork.load(args.network)
    doc = json.loads(Path(args.clusters).read_text(encoding="utf-8"))
    clusters = clusters_from_dicts(sketch, doc["clusters"], cfg)
    patches, report, warnings = stage_surface(sketch, network, clusters, cfg)
    out = _out_dir(args)
    _dump(report, out / "patches.json")
    mesh = assemble_mesh(patches, network)
    write_obj(mesh, out / "mesh.obj", network)
    print(f"wrote {out / 'patches.json'} and {out / 'mesh.obj'}: "
          f"{len(patches)} patches, {mesh.faces.shape[0]} faces")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    summary = run_pipeline(args.sketch, args.model, cfg, out)
    stages = summary["timings"]["stages"]
    print(f"pipeline finished in {summary['timings']['total']:.1f}s: "
          f"{summary['n_nodes']} nodes, {summary['n_edges']} edges, "
          f"{summary['n_patches']} patches")
    for name, secs in stages.items():
        print(f"  {name}: {secs:.2f}s")
    for w in summary["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    if args.figures:
        from .report import (save_mesh_figure, save_network_figure,
                             save_timings_figure)
        network = CurveNetwork.load(out / "network.json")
        save_network_figure(network, out / "network.png")
        doc = json.loads((out / "scribble_clusters.json").read_text(
            encoding="utf-8"))
        sketch = load_sketch(args.sketch)
        clusters = clusters_from_dicts(sketch, doc["clusters"], cfg)
        patches, _, _ = stage_surface(sketch, network, clusters, cfg)
        save_mesh_figure(assemble_mesh(patches, network), out / "mesh.png")
        save_timings_figure(summary["timings"], out / "timings.png")
        print(f"figures in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchrecon",
        description="Curve networks and surfaces from 4D design sketches")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="pipeline config JSON")
        if seed:
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("synth", help="generate a synthetic labeled sketch")
    p.add_argument("--object", required=True,
                   choices=["cube", "open_box", "wall", "y_junction"])
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--overdraw", type=int, default=1)
    p.add_argument("--scribble-overdraw", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("features", help="extract the per-stroke features")
    p.add_argument("sketch")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("stats", help="feature significance report")
    p.add_argument("features", help="features CSV with labels")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=".")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("train", help="grid-search and train a classifier")
    p.add_argument("features")
    p.add_argument("--subset", default="geo_or_sty",
                   choices=["geo", "sty", "geo_or_sty", "geo_and_sty"])
    p.add_argument("--model", default="rf", choices=["rf", "xgbrf"])
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ablate", help="run the 2-model x 4-subset ablation")
    p.add_argument("features")
    p.add_argument("--out", default=".")
    p.add_argument("--figures", action="store_true")
    p.add_argument("--quick", action="store_true",
                   help="single-point grid instead of the full default grid")
    common(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("predict", help="classify strokes of a sketch")
    p.add_argument("sketch")
    p.add_argument("model")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("cluster-shape", help="group boundary strokes")
    p.add_argument("sketch")
    p.add_argument("labels")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_cluster_shape)

    p = sub.add_parser("consolidate", help="fit one curve per group")
    p.add_argument("sketch")
    p.add_argument("clusters")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_consolidate)

    p = sub.add_parser("topology", help="connect curves into a network")
    p.add_argument("curves")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_topology)

    p = sub.add_parser("cluster-scribble", help="group fill strokes")
    p.add_argument("sketch")
    p.add_argument("labels")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_cluster_scribble)

    p = sub.add_parser("surface", help="discover cycles and mesh patches")
    p.add_argument("sketch")
    p.add_argument("network")
    p.add_argument("clusters")
    p.add_argument("--out", default=".")
    p.add_argument("--unguided", action="store_true",
                   help="global cycle search, no scribble guidance")
    common(p)
    p.set_defaults(fn=cmd_surface)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("sketch")
    p.add_argument("model")
    p.add_argument("--out", default=".")
    p.add_argument("--figures", action="store_true")
    p.add_argument("--unguided", action="store_true")
    common(p)
    p.set_defaults(fn=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SketchReconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
