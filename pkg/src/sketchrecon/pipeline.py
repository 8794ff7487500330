"""End-to-end orchestration with stage-wise artifacts.

Each stage is a pure function from input artifacts to an output artifact,
so running the stages individually through their files produces exactly
the bytes that one `run_pipeline` call produces. Artifacts written to the
output directory:

    labels.json              predicted stroke types + vote fractions
    shape_clusters.json      stroke id -> cluster id (boundary strokes)
    curves.json              consolidated four-control-point curves
    network.json             curve network graph
    scribble_clusters.json   scribble stroke groups and their boxes
    patches.json             chosen cycles, weights, coverage, verification
    mesh.obj                 welded surface mesh
    timings.json             per-stage wall time (excluded from
                             determinism comparisons by nature)
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .consolidate import (ConsolidatedCurve, cluster_shape_strokes,
                          consolidate_clusters, preprocess_stroke)
from .core.io import load_sketch
from .core.model import Sketch, StrokeLabel
from .errors import NoCycleFound, SketchReconError
from .features import extract_features
from .forest import ForestModel, predict
from .surfacing import (ScribbleCluster, assemble_mesh, cluster_scribbles,
                        discover_cycles, edge_sample_map, make_cluster,
                        patch_report, unguided_cycles, verify_patches,
                        write_obj)
from .topology import CurveNetwork, build_network, plan_connections

STAGE_PREDICT = "Stroke Type Prediction"
STAGE_SHAPE = "Clustering Shape Strokes"
STAGE_TOPOLOGY = "Topology Recovery"
STAGE_SCRIBBLE = "Clustering Scribble Strokes"
STAGE_SURFACE = "Cycle Discovery and Surfacing"


def _dump(obj: dict, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1), encoding="utf-8")


def stage_predict(sketch: Sketch, model: ForestModel) -> dict:
    matrix = extract_features(sketch)
    labels, fractions = predict(model, matrix)
    return {
        "labels": [int(v) for v in labels],
        "vote_fraction": [float(v) for v in fractions],
    }


def _stroke_sets(sketch: Sketch, labels: list[int]):
    shape_ids = [i for i, v in enumerate(labels) if v == 1]
    scribble_ids = [i for i, v in enumerate(labels) if v == 0]
    return shape_ids, scribble_ids


def stage_cluster_shapes(sketch: Sketch, labels: list[int],
                         cfg: PipelineConfig, threads: int = 1) -> dict:
    shape_ids, _ = _stroke_sets(sketch, labels)
    pre = [preprocess_stroke(sketch.strokes[i], i) for i in shape_ids]
    clustering = cluster_shape_strokes(pre, epsilon=cfg.shape_epsilon,
                                       coeff=cfg.match_coeff, threads=threads)
    return {
        "epsilon": clustering.epsilon,
        "clusters": {str(sid): int(c)
                     for sid, c in zip(shape_ids, clustering.labels)},
    }


def stage_consolidate(sketch: Sketch, shape_clusters: dict,
                      cfg: PipelineConfig) -> list[ConsolidatedCurve]:
    from .clustering import Clustering
    items = sorted((int(k), int(v)) for k, v in
                   shape_clusters["clusters"].items())
    shape_ids = [k for k, _ in items]
    labels = np.array([v for _, v in items], dtype=int)
    pre = [preprocess_stroke(sketch.strokes[i], i) for i in shape_ids]
    clustering = Clustering(labels=labels,
                            epsilon=float(shape_clusters.get("epsilon", 0.0)),
                            min_pts=cfg.min_pts)
    return consolidate_clusters(pre, clustering,
                                ratio_threshold=cfg.bifurcation_ratio)


def stage_topology(curves: list[ConsolidatedCurve],
                   cfg: PipelineConfig) -> CurveNetwork:
    plan = plan_connections(curves, coeff=cfg.match_coeff)
    return build_network(curves, plan)


def stage_cluster_scribbles(sketch: Sketch, labels: list[int],
                            cfg: PipelineConfig,
                            threads: int = 1) -> list[ScribbleCluster]:
    shape_ids, scribble_ids = _stroke_sets(sketch, labels)
    return cluster_scribbles(
        [sketch.strokes[i] for i in scribble_ids], scribble_ids,
        [sketch.strokes[i] for i in shape_ids], cfg=cfg, threads=threads)


def clusters_from_dicts(sketch: Sketch, dicts: list[dict],
                        cfg: PipelineConfig) -> list[ScribbleCluster]:
    """Rebuild cluster objects from the stage artifact (stroke ids only)."""
    strokes = {i: sketch.strokes[i] for i in range(len(sketch))}
    return [make_cluster(d["cluster_id"], list(d["stroke_ids"]), strokes,
                         cfg.box_scale) for d in dicts]


def stage_surface(sketch: Sketch, network: CurveNetwork,
                  clusters: list[ScribbleCluster], cfg: PipelineConfig,
                  ) -> tuple[list, dict, list[str]]:
    """Returns (verified patches, patch report dict, warnings)."""
    warnings: list[str] = []
    if cfg.unguided:
        patches = unguided_cycles(network, cfg)
        report = patch_report(patches)
        return patches, report, warnings
    samples = edge_sample_map(network)
    patches, unsurfaced = [], []
    for cluster in clusters:
        try:
            _, patch = discover_cycles(network, cluster, cfg, samples=samples)
            patches.append(patch)
        except NoCycleFound as exc:
            warnings.append(str(exc))
            unsurfaced.append({"cluster_id": cluster.cluster_id,
                               "reason": str(exc)})
    kept = verify_patches(patches, clusters, cfg)
    for p in patches:
        if not p.verified:
            warnings.append(
                f"patch over cluster {p.source_cluster_id} discarded at "
                f"verification (coverage {p.coverage:.2f})")
    report = patch_report(kept, unsurfaced)
    return kept, report, warnings


def run_pipeline(sketch_path: str | Path, model_path: str | Path,
                 config: PipelineConfig | None = None,
                 out_dir: str | Path = ".") -> dict:
    """Run all stages on a sketch file, writing the artifact set.

    Returns a summary dict with timings and warnings. Raises
    SketchReconError subclasses with a stage-tagged message on failure;
    unsurfaced clusters are warnings, not failures.
    """
    cfg = config or PipelineConfig()
    threads = cfg.resolved_threads()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    warnings: list[str] = []

    def staged(name: str, fn, *args):
        t0 = time.perf_counter()
        try:
            result = fn(*args)
        except SketchReconError as exc:
            raise type(exc)(f"[{name}] {exc}") from exc
        timings[name] = time.perf_counter() - t0
        return result

    sketch = load_sketch(sketch_path)
    model = ForestModel.load(model_path)

    labels_doc = staged(STAGE_PREDICT, stage_predict, sketch, model)
    _dump(labels_doc, out / "labels.json")
    labels = labels_doc["labels"]

    def shape_stage():
        clusters_doc = stage_cluster_shapes(sketch, labels, cfg, threads)
        curves = stage_consolidate(sketch, clusters_doc, cfg)
        return clusters_doc, curves

    clusters_doc, curves = staged(STAGE_SHAPE, shape_stage)
    _dump(clusters_doc, out / "shape_clusters.json")
    _dump({"curves": [c.to_dict() for c in curves]}, out / "curves.json")

    network = staged(STAGE_TOPOLOGY, stage_topology, curves, cfg)
    network.save(out / "network.json")
    warnings.extend(network.warnings)

    scribble_clusters = staged(STAGE_SCRIBBLE, stage_cluster_scribbles,
                               sketch, labels, cfg, threads)
    _dump({"clusters": [c.to_dict() for c in scribble_clusters]},
          out / "scribble_clusters.json")
    if not scribble_clusters and not cfg.unguided:
        warnings.append("no scribble strokes: curve network exported, "
                        "mesh left empty")

    patches, report, surface_warnings = staged(
        STAGE_SURFACE, stage_surface, sketch, network, scribble_clusters, cfg)
    warnings.extend(surface_warnings)
    _dump(report, out / "patches.json")
    mesh = assemble_mesh(patches, network)
    write_obj(mesh, out / "mesh.obj", network)

    timings_doc = {"stages": timings, "total": float(sum(timings.values()))}
    _dump(timings_doc, out / "timings.json")
    return {
        "artifacts": ["labels.json", "shape_clusters.json", "curves.json",
                      "network.json", "scribble_clusters.json",
                      "patches.json", "mesh.obj", "timings.json"],
        "timings": timings_doc,
        "warnings": warnings,
        "n_patches": len(patches),
        "n_nodes": int(network.nodes.shape[0]),
        "n_edges": len(network.edges),
    }


def load_curves(path: str | Path) -> list[ConsolidatedCurve]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ConsolidatedCurve.from_dict(d) for d in doc["curves"]]
