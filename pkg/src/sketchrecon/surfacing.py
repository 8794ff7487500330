"""Scribble clustering, cycle discovery, patch verification and meshing.

Scribble strokes are grouped by an overlap score (penalized when a
boundary stroke separates the overlap region), each cluster's scaled
bounding box selects a local subgraph of the curve network, simple cycles
of that subgraph are enumerated exhaustively, and the cycle whose
triangulated patch best covers the cluster's points is kept. Patches are
verified by projecting cluster points along triangle normals, then welded
into one surface mesh. An unguided mode searches the whole network
instead, accepting cycles greedily by weight under an edge-capacity-2
rule; it exists to contrast guided and unguided surfacing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .clustering import (ScoreKind, ScoreMatrix, dbscan, score_to_distance,
                         similar_epsilon)
from .config import PipelineConfig
from .consolidate import promote_singletons
from .core.geometry import points_in_box, scale_box
from .core.model import CanvasType, StrokeRecord
from .errors import DegenerateInput, NoCycleFound
from .topology import CurveNetwork
from .triangulation import TriangulationWeights, triangulate_polygon

MATCH_COEFF = 1.5
BOX_SCALE = 1.5
OVERLAP_GAIN = 12.5
SEPARATOR_PENALTY = 25.0
CANVAS_FAR_COEFF = 100.0
PLANE_INV_THRESHOLD = 0.375
SPHERE_INV_THRESHOLD = 1.75
MAX_CYCLE_EDGES = 12
POLYGON_CAP = 64
EDGE_SAMPLE_CAP = 16          # interior sample intervals per edge
COVERAGE_THRESHOLD = 0.6
VERIFY_FRACTION = 0.5
PROJECTION_WIDTHS = 2.0       # projection reach, times mean cluster width


# --- scribble similarity -----------------------------------------------------

def canvas_coefficient(s_i: StrokeRecord, s_j: StrokeRecord,
                       cfg: PipelineConfig | None = None) -> float:
    """Overlap gain factor from the two parent canvases.

    Same-type Plane (Sphere) canvas pairs whose centers are far enough
    apart (reciprocal distance at or below the threshold) take the
    permissive factor; everything else, including coincident centers
    (reciprocal = +inf), takes 1/12.5.
    """
    cfg = cfg or PipelineConfig()
    ci = (s_i.canvas_transform @ np.array([0.0, 0.0, 0.0, 1.0]))[:3]
    cj = (s_j.canvas_transform @ np.array([0.0, 0.0, 0.0, 1.0]))[:3]
    d = float(np.linalg.norm(ci - cj))
    inv = np.inf if d == 0.0 else 1.0 / d
    if s_i.canvas_type == s_j.canvas_type == CanvasType.PLANE:
        if inv <= cfg.plane_inv_threshold:
            return cfg.canvas_far_coeff
    elif s_i.canvas_type == s_j.canvas_type == CanvasType.SPHERE:
        if inv <= cfg.sphere_inv_threshold:
            return cfg.canvas_far_coeff
    return 1.0 / cfg.overlap_gain


def scribble_score(s_i: StrokeRecord, s_j: StrokeRecord,
                   shape_strokes: list[StrokeRecord],
                   shape_trees: list[cKDTree] | None = None,
                   cfg: PipelineConfig | None = None) -> float:
    """Overlap similarity of two scribble strokes, in [-25, 1].

    The positive term counts vertex pairs within 1.5 min(w_i, w_j),
    scaled by the canvas coefficient and clamped at 1. The penalty term
    measures how much of the matched region lies on a boundary stroke: a
    separator between the two scribbles drives the score strongly
    negative. The aggregate over boundary strokes is max by default
    ("min" follows the published formula literally).
    """
    cfg = cfg or PipelineConfig()
    reach = cfg.match_coeff * min(s_i.ink_width, s_j.ink_width)
    tree_j = cKDTree(s_j.positions)
    lists = tree_j.query_ball_point(s_i.positions, reach)
    counts = np.array([len(v) for v in lists])
    n_pairs = int(counts.sum())
    if n_pairs == 0:
        return 0.0
    matched_i = s_i.positions[counts > 0]
    matched_j_idx = sorted({k for v in lists for k in v})
    matched = np.vstack([matched_i, s_j.positions[matched_j_idx]])

    first = min(canvas_coefficient(s_i, s_j, cfg) * cfg.overlap_gain * n_pairs
                / (len(s_i) + len(s_j)), 1.0)

    if not shape_strokes:
        return float(first)
    if shape_trees is None:
        shape_trees = [cKDTree(s.positions) for s in shape_strokes]
    fractions = []
    for shape, tree in zip(shape_strokes, shape_trees):
        d, _ = tree.query(matched, k=1,
                          distance_upper_bound=cfg.match_coeff * shape.ink_width)
        fractions.append(float(np.isfinite(d).mean()))
    agg = (max(fractions) if cfg.separator_aggregate == "max"
           else min(fractions))
    return float(first - cfg.separator_penalty * agg)


def scribble_score_matrix(scribbles: list[StrokeRecord],
                          shapes: list[StrokeRecord],
                          cfg: PipelineConfig | None = None,
                          threads: int = 1) -> ScoreMatrix:
    n = len(scribbles)
    trees = [cKDTree(s.positions) for s in shapes]
    values = np.zeros((n, n))

    def row(i: int) -> list[float]:
        return [scribble_score(scribbles[i], scribbles[j], shapes, trees, cfg)
                for j in range(i + 1, n)]

    if threads > 1 and n > 2:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(n)))
    else:
        rows = [row(i) for i in range(n)]
    for i in range(n):
        for k, s in enumerate(rows[i]):
            j = i + 1 + k
            values[i, j] = values[j, i] = s
    return ScoreMatrix(values=values, kind=ScoreKind.SCRIBBLE)


@dataclass
class ScribbleCluster:
    """A group of scribble strokes presumed to mark one face."""

    cluster_id: int
    stroke_ids: tuple[int, ...]      # indices into the sketch
    points: np.ndarray               # all member vertices
    mean_width: float
    mean_normal: np.ndarray          # mean canvas normal, unit
    box_lo: np.ndarray
    box_hi: np.ndarray
    scaled_lo: np.ndarray
    scaled_hi: np.ndarray

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "stroke_ids": list(self.stroke_ids),
            "mean_width": self.mean_width,
            "mean_normal": self.mean_normal.tolist(),
            "box": [self.box_lo.tolist(), self.box_hi.tolist()],
            "scaled_box": [self.scaled_lo.tolist(), self.scaled_hi.tolist()],
        }


def make_cluster(cluster_id: int, stroke_ids: list[int],
                 strokes: list[StrokeRecord],
                 box_scale: float = BOX_SCALE) -> ScribbleCluster:
    pts = np.vstack([strokes[i].positions for i in stroke_ids])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    slo, shi = scale_box(lo, hi, box_scale)
    normals = np.vstack([strokes[i].normals for i in stroke_ids])
    mean_n = normals.mean(axis=0)
    nn = np.linalg.norm(mean_n)
    mean_n = mean_n / nn if nn > 1e-12 else np.array([0.0, 0.0, 1.0])
    return ScribbleCluster(
        cluster_id=cluster_id, stroke_ids=tuple(stroke_ids), points=pts,
        mean_width=float(np.mean([strokes[i].ink_width for i in stroke_ids])),
        mean_normal=mean_n, box_lo=lo, box_hi=hi, scaled_lo=slo, scaled_hi=shi)


def cluster_scribbles(scribbles: list[StrokeRecord],
                      scribble_ids: list[int],
                      shapes: list[StrokeRecord],
                      cfg: PipelineConfig | None = None,
                      threads: int = 1) -> list[ScribbleCluster]:
    """Group scribble strokes; singletons survive as one-stroke clusters."""
    cfg = cfg or PipelineConfig()
    box_scale = cfg.box_scale
    if not scribbles:
        return []
    if len(scribbles) == 1:
        return [make_cluster(0, [scribble_ids[0]],
                             {scribble_ids[0]: scribbles[0]}, box_scale)]
    matrix = scribble_score_matrix(scribbles, shapes, cfg, threads)
    distances = score_to_distance(matrix)
    epsilon = cfg.scribble_epsilon
    if epsilon is None:
        epsilon = similar_epsilon(distances, k=1)
    labels = promote_singletons(dbscan(distances, epsilon, min_pts=2).labels)
    by_sketch_id = {scribble_ids[i]: scribbles[i] for i in range(len(scribbles))}
    clusters = []
    for cid in sorted(set(labels.tolist())):
        members = [scribble_ids[i] for i in range(len(labels))
                   if labels[i] == cid]
        clusters.append(make_cluster(len(clusters), members, by_sketch_id,
                                     box_scale))
    return clusters


# --- cycle enumeration -------------------------------------------------------

def enumerate_cycles(edges: list[tuple[int, int, int]],
                     max_edges: int = MAX_CYCLE_EDGES) -> list[list[int]]:
    """All node-simple cycles with at most max_edges edges.

    Edges are (edge_id, node_a, node_b); parallel edges form valid
    2-cycles. Each cycle is returned once (canonical edge-set key) as an
    edge id list in traversal order, independent of input order.
    """
    adj: dict[int, list[tuple[int, int]]] = {}
    for eid, a, b in edges:
        adj.setdefault(a, []).append((eid, b))
        adj.setdefault(b, []).append((eid, a))
    for v in adj:
        adj[v].sort()
    seen: set[frozenset] = set()
    cycles: list[list[int]] = []

    def dfs(start: int, node: int, path_edges: list[int],
            visited: set[int]) -> None:
        for eid, nxt in adj[node]:
            if path_edges and eid == path_edges[-1]:
                continue
            if nxt == start and len(path_edges) >= 1:
                if eid != path_edges[0] or len(path_edges) >= 2:
                    key = frozenset(path_edges + [eid])
                    if len(key) == len(path_edges) + 1 and key not in seen:
                        seen.add(key)
                        cycles.append(path_edges + [eid])
                continue
            if nxt in visited or nxt < start:
                continue
            if len(path_edges) + 1 >= max_edges:
                continue
            visited.add(nxt)
            dfs(start, nxt, path_edges + [eid], visited)
            visited.remove(nxt)

    for start in sorted(adj):
        dfs(start, start, [], {start})
    return sorted(cycles, key=lambda c: sorted(c))


def edge_sample_map(network: CurveNetwork,
                    cap: int = EDGE_SAMPLE_CAP) -> dict[int, np.ndarray]:
    """Per-edge boundary samples at half-width spacing (capped), oriented
    node_a -> node_b. Shared across cycles so welded patches agree."""
    out = {}
    for e in network.edges:
        n = int(np.clip(np.ceil(e.length() / (0.5 * e.width)), 2, cap))
        out[e.edge_id] = e.evaluate(np.linspace(0.0, 1.0, n + 1))
    return out


def cycle_polygon(network: CurveNetwork, cycle_edges: list[int],
                  samples: dict[int, np.ndarray],
                  cap: int = POLYGON_CAP) -> np.ndarray:
    """Sampled boundary polyline of a cycle (closed, last point omitted)."""
    edge_by_id = {e.edge_id: e for e in network.edges}
    first = edge_by_id[cycle_edges[0]]
    second = edge_by_id[cycle_edges[1]] if len(cycle_edges) > 1 else first
    if first.node_b in (second.node_a, second.node_b):
        node = first.node_a
    else:
        node = first.node_b
    chunks = []
    total = sum(samples[eid].shape[0] - 1 for eid in cycle_edges)
    stride_scale = max(1.0, total / cap)
    for eid in cycle_edges:
        e = edge_by_id[eid]
        pts = samples[eid]
        if e.node_a == node:
            node = e.node_b
        else:
            pts = pts[::-1]
            node = e.node_a
        seg = pts[:-1]
        if stride_scale > 1.0:
            keep = max(1, int(np.floor(seg.shape[0] / stride_scale)))
            idx = np.linspace(0, seg.shape[0] - 1, keep).round().astype(int)
            seg = seg[np.unique(idx)]
        chunks.append(seg)
    return np.vstack(chunks)


def project_coverage(points: np.ndarray, polygon: np.ndarray,
                     triangles: np.ndarray, max_offset: float) -> float:
    """Fraction of points whose normal projection lands inside some patch
    triangle within the offset limit."""
    pts = np.asarray(points, dtype=np.float64)
    covered = np.zeros(pts.shape[0], dtype=bool)
    for tri in triangles:
        a, b, c = polygon[tri[0]], polygon[tri[1]], polygon[tri[2]]
        n = np.cross(b - a, c - a)
        nn = np.linalg.norm(n)
        if nn < 1e-15:
            continue
        n = n / nn
        rel = pts - a
        off = rel @ n
        foot = rel - off[:, None] * n
        # barycentric inside test
        v0, v1 = b - a, c - a
        d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
        denom = d00 * d11 - d01 * d01
        if abs(denom) < 1e-18:
            continue
        d20 = foot @ v0
        d21 = foot @ v1
        v = (d11 * d20 - d01 * d21) / denom
        w = (d00 * d21 - d01 * d20) / denom
        eps = 1e-9
        inside = (v >= -eps) & (w >= -eps) & (v + w <= 1.0 + eps)
        covered |= inside & (np.abs(off) <= max_offset)
        if covered.all():
            break
    return float(covered.mean())


@dataclass
class CyclePatch:
    """A boundary cycle selected to carry a surface patch."""

    patch_id: int
    edge_ids: tuple[int, ...]
    polygon: np.ndarray           # (m, 3) closed boundary, sampled
    triangles: np.ndarray         # (k, 3) indices into polygon
    weight: float
    coverage: float
    source_cluster_id: int        # -1 for unguided patches
    orientation_normal: np.ndarray
    verified: bool = False

    def to_dict(self) -> dict:
        return {
            "patch_id": self.patch_id,
            "edge_ids": list(self.edge_ids),
            "n_boundary_vertices": int(self.polygon.shape[0]),
            "n_triangles": int(self.triangles.shape[0]),
            "weight": self.weight,
            "coverage": self.coverage,
            "source_cluster_id": self.source_cluster_id,
            "verified": self.verified,
        }


def discover_cycles(network: CurveNetwork, cluster: ScribbleCluster,
                    cfg: PipelineConfig | None = None,
                    samples: dict[int, np.ndarray] | None = None,
                    ) -> tuple[list[dict], CyclePatch]:
    """Choose the best-covering cycle of the cluster's local subgraph.

    Returns (all scored candidates, the chosen patch); raises
    NoCycleFound when the subgraph has no cycle or nothing covers the
    cluster well enough.
    """
    cfg = cfg or PipelineConfig()
    if samples is None:
        samples = edge_sample_map(network)
    diag = float(np.linalg.norm(cluster.scaled_hi - cluster.scaled_lo))
    pad = 1e-7 * max(1.0, diag)
    sub = []
    for e in network.edges:
        inside = points_in_box(samples[e.edge_id], cluster.scaled_lo,
                               cluster.scaled_hi, pad=pad)
        if inside.any():
            sub.append((e.edge_id, e.node_a, e.node_b))
    cycles = enumerate_cycles(sub, max_edges=cfg.max_cycle_edges)
    if not cycles:
        raise NoCycleFound(
            f"cluster {cluster.cluster_id}: no cycle in its bounding box "
            f"subgraph of {len(sub)} edges")
    w = TriangulationWeights(cfg.area_coeff, cfg.dihedral_coeff)
    delta = cfg.projection_widths * cluster.mean_width
    candidates = []
    for cyc in cycles:
        polygon = cycle_polygon(network, cyc, samples)
        tris, weight = triangulate_polygon(polygon, w)
        cov = project_coverage(cluster.points, polygon, tris, delta)
        candidates.append({
            "edge_ids": tuple(cyc), "polygon": polygon, "triangles": tris,
            "weight": weight, "coverage": cov,
        })
    candidates.sort(key=lambda c: (-c["coverage"], len(c["edge_ids"]),
                                   c["weight"], sorted(c["edge_ids"])))
    best = candidates[0]
    if best["coverage"] < cfg.coverage_threshold:
        raise NoCycleFound(
            f"cluster {cluster.cluster_id}: best cycle covers only "
            f"{best['coverage']:.2f} of the scribble points")
    patch = CyclePatch(
        patch_id=-1, edge_ids=best["edge_ids"], polygon=best["polygon"],
        triangles=best["triangles"], weight=best["weight"],
        coverage=best["coverage"], source_cluster_id=cluster.cluster_id,
        orientation_normal=cluster.mean_normal)
    return candidates, patch


def unguided_cycles(network: CurveNetwork,
                    cfg: PipelineConfig | None = None,
                    capacity: int = 2) -> list[CyclePatch]:
    """Global cycle selection without scribble guidance.

    Enumerates all bounded simple cycles, then greedily accepts them by
    ascending triangulation weight while no edge is used by more than
    `capacity` patches.
    """
    cfg = cfg or PipelineConfig()
    samples = edge_sample_map(network)
    w = TriangulationWeights(cfg.area_coeff, cfg.dihedral_coeff)
    cycles = enumerate_cycles(
        [(e.edge_id, e.node_a, e.node_b) for e in network.edges],
        max_edges=cfg.max_cycle_edges)
    scored = []
    for cyc in cycles:
        polygon = cycle_polygon(network, cyc, samples)
        tris, weight = triangulate_polygon(polygon, w)
        scored.append((weight, len(cyc), sorted(cyc), cyc, polygon, tris))
    scored.sort(key=lambda t: (t[0], t[1], t[2]))
    usage: dict[int, int] = {}
    patches: list[CyclePatch] = []
    for weight, _, _, cyc, polygon, tris in scored:
        if any(usage.get(e, 0) + 1 > capacity for e in cyc):
            continue
        for e in cyc:
            usage[e] = usage.get(e, 0) + 1
        normal = np.cross(polygon[1] - polygon[0], polygon[2] - polygon[0])
        nn = np.linalg.norm(normal)
        normal = normal / nn if nn > 1e-12 else np.array([0.0, 0.0, 1.0])
        patches.append(CyclePatch(
            patch_id=len(patches), edge_ids=tuple(cyc), polygon=polygon,
            triangles=tris, weight=weight, coverage=0.0,
            source_cluster_id=-1, orientation_normal=normal))
    return patches


def verify_patches(patches: list[CyclePatch],
                   clusters: list[ScribbleCluster],
                   cfg: PipelineConfig | None = None) -> list[CyclePatch]:
    """Keep patches onto which some cluster projects well enough."""
    cfg = cfg or PipelineConfig()
    kept = []
    for p in patches:
        best = 0.0
        for c in clusters:
            cov = project_coverage(
                c.points, p.polygon, p.triangles,
                cfg.projection_widths * c.mean_width)
            best = max(best, cov)
        if best >= cfg.verify_fraction:
            p.verified = True
            p.coverage = max(p.coverage, best)
            kept.append(p)
    return kept


# --- mesh assembly -----------------------------------------------------------

@dataclass
class SurfaceMesh:
    vertices: np.ndarray          # (v, 3)
    faces: np.ndarray             # (f, 3) vertex indices
    face_patch: np.ndarray        # (f,) patch id per face
    patch_edge_ids: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def edge_count(self) -> int:
        edges = set()
        for f in self.faces:
            fi = sorted(int(v) for v in f)
            edges.update({(fi[0], fi[1]), (fi[0], fi[2]), (fi[1], fi[2])})
        return len(edges)

    def euler_characteristic(self) -> int:
        return int(self.vertices.shape[0] - self.edge_count()
                   + self.faces.shape[0])

    def is_empty(self) -> bool:
        return self.faces.shape[0] == 0


def assemble_mesh(patches: list[CyclePatch],
                  network: CurveNetwork | None = None,
                  weld_tol: float = 1e-6) -> SurfaceMesh:
    """Concatenate patch triangles, welding vertices shared along common
    boundary curves. Faces are wound counterclockwise with respect to
    each patch's orientation normal. The result may be open or
    non-manifold; zero-area faces are dropped.
    """
    if not patches:
        return SurfaceMesh(vertices=np.zeros((0, 3)),
                           faces=np.zeros((0, 3), dtype=int),
                           face_patch=np.zeros(0, dtype=int))
    all_pts = np.vstack([p.polygon for p in patches])
    tree = cKDTree(all_pts)
    parent = np.arange(all_pts.shape[0])

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in sorted(tree.query_pairs(weld_tol)):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    remap = {}
    verts: list[np.ndarray] = []
    global_id = np.zeros(all_pts.shape[0], dtype=int)
    for i in range(all_pts.shape[0]):
        r = find(i)
        if r not in remap:
            remap[r] = len(verts)
            verts.append(all_pts[r])
        global_id[i] = remap[r]

    faces, owner = [], []
    offset = 0
    patch_edges = {}
    for pid, p in enumerate(patches):
        p.patch_id = pid
        patch_edges[pid] = p.edge_ids
        for tri in p.triangles:
            ids = [int(global_id[offset + k]) for k in tri]
            a, b, c = (verts[ids[0]], verts[ids[1]], verts[ids[2]])
            n = np.cross(b - a, c - a)
            area2 = np.linalg.norm(n)
            if area2 * 0.5 <= 1e-12:
                continue
            if n @ p.orientation_normal < 0.0:
                ids = [ids[0], ids[2], ids[1]]
            faces.append(ids)
            owner.append(pid)
        offset += p.polygon.shape[0]
    return SurfaceMesh(
        vertices=np.asarray(verts),
        faces=np.asarray(faces, dtype=int) if faces else np.zeros((0, 3), int),
        face_patch=np.asarray(owner, dtype=int),
        patch_edge_ids=patch_edges)


def write_obj(mesh: SurfaceMesh, path: str | Path,
              network: CurveNetwork | None = None) -> None:
    """Wavefront OBJ export: one object per connected network component,
    one group per patch."""
    component_of_patch = {}
    if network is not None and network.edges:
        parent = {n: n for n in range(network.nodes.shape[0])}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in network.edges:
            ra, rb = find(e.node_a), find(e.node_b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        edge_comp = {e.edge_id: find(e.node_a) for e in network.edges}
        for pid, eids in mesh.patch_edge_ids.items():
            component_of_patch[pid] = edge_comp.get(eids[0], 0) if eids else 0

    lines = ["# surface patches reconstructed from sketch scribbles"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]!r} {v[1]!r} {v[2]!r}")
    by_component: dict[int, list[int]] = {}
    for pid in sorted(mesh.patch_edge_ids):
        by_component.setdefault(component_of_patch.get(pid, 0), []).append(pid)
    for comp in sorted(by_component):
        lines.append(f"o network{comp}")
        for pid in by_component[comp]:
            lines.append(f"g patch{pid}")
            for f, owner in zip(mesh.faces, mesh.face_patch):
                if owner == pid:
                    lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def patch_report(patches: list[CyclePatch],
                 unsurfaced: list[dict] | None = None) -> dict:
    return {
        "patches": [p.to_dict() for p in patches],
        "unsurfaced_clusters": unsurfaced or [],
    }
