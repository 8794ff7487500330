"""Synthetic 4D sketch generator.

Produces labeled test sketches that mimic how designers draw: boundary
("Shape") strokes slow, short and straight along object edges, drawn
first; area-filling ("Scribble") strokes fast, long serpentines over the
faces, drawn afterwards with speed dips at every turn. Ground-truth
cluster and face assignments are emitted in the sketch's ``oracle``
section so tests downstream can check recovered structure against the
construction. Output is a pure function of the config.

Supported objects:

* ``cube``       - unit cube, 12 edges, 6 scribbled faces
* ``open_box``   - unit cube, 12 edges, top face left unscribbled
* ``wall``       - a single upright rectangle, 4 edges, 1 face
* ``y_junction`` - three arms meeting at a point, drawn as bent
                   two-arm strokes; no faces
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..errors import ConfigError
from .model import CanvasType, Sketch, StrokeLabel, StrokeRecord

SHAPE_WIDTH = 0.05
SCRIBBLE_WIDTH = 0.08
EDGE_GAP_WIDTHS = 0.5      # edge strokes stop short of corners by this * width
FACE_MARGIN = 0.15         # scribbles keep this margin from the face boundary
SHAPE_COLOR = (0.13, 0.17, 0.62)
SCRIBBLE_COLOR = (0.80, 0.16, 0.10)


@dataclass(frozen=True)
class SynthConfig:
    object: str
    jitter_sigma: float = 0.0
    overdraw_count: int = 1
    seed: int = 0
    scribble_overdraw: int = 1

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0:
            raise ConfigError("jitter_sigma must be >= 0")
        if self.overdraw_count < 1:
            raise ConfigError("overdraw_count must be >= 1")
        if self.scribble_overdraw < 1:
            raise ConfigError("scribble_overdraw must be >= 1")


def _plane_transform(center: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Affine matrix placing the unit plane canvas (z=0) at a world plane."""
    n = normal / np.linalg.norm(normal)
    ref = np.array([1.0, 0.0, 0.0])
    if abs(n @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    u = np.cross(ref, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    m = np.eye(4)
    m[:3, 0] = u
    m[:3, 1] = v
    m[:3, 2] = n
    m[:3, 3] = center
    return m


@dataclass
class _Layout:
    corners: np.ndarray                  # (nc, 3)
    edges: list[tuple[int, int]]         # corner index pairs
    faces: list[dict]                    # corners (cyclic), edges, center, normal
    scribbled_faces: list[int]
    edge_canvas_face: list[int]          # face id providing each edge's canvas


def _cube_layout(open_top: bool = False) -> _Layout:
    bits = [(x, y, z) for z in (0, 1) for y in (0, 1) for x in (0, 1)]
    corners = np.array(bits, dtype=np.float64) - 0.5
    index = {b: i for i, b in enumerate(bits)}
    edges = []
    for a, b in combinations(range(8), 2):
        if sum(x != y for x, y in zip(bits[a], bits[b])) == 1:
            edges.append((a, b))
    edges.sort()
    edge_id = {frozenset(e): i for i, e in enumerate(edges)}

    faces = []
    for axis in range(3):
        for sign in (0, 1):
            ids = [i for i, b in enumerate(bits) if b[axis] == sign]
            normal = np.zeros(3)
            normal[axis] = 1.0 if sign else -1.0
            center = normal * 0.5
            u_ax, v_ax = (axis + 1) % 3, (axis + 2) % 3
            # cyclic order around the outward normal
            ang = np.arctan2(corners[ids][:, v_ax] * normal[axis],
                             corners[ids][:, u_ax])
            ids = [ids[k] for k in np.argsort(ang)]
            face_edges = [edge_id[frozenset((ids[k], ids[(k + 1) % 4]))]
                          for k in range(4)]
            faces.append({"corners": ids, "edges": face_edges,
                          "center": center, "normal": normal})

    top = next(i for i, f in enumerate(faces)
               if f["normal"][2] > 0.5)
    scribbled = [i for i in range(6) if not (open_top and i == top)]
    edge_canvas = []
    for e in range(len(edges)):
        owner = min(i for i, f in enumerate(faces) if e in f["edges"])
        edge_canvas.append(owner)
    return _Layout(corners, edges, faces, scribbled, edge_canvas)


def _wall_layout() -> _Layout:
    corners = np.array([
        [-0.6, 0.0, -0.4], [0.6, 0.0, -0.4], [0.6, 0.0, 0.4], [-0.6, 0.0, 0.4],
    ])
    edges = [(0, 1), (1, 2), (2, 3), (3, 0)]
    face = {"corners": [0, 1, 2, 3], "edges": [0, 1, 2, 3],
            "center": np.zeros(3), "normal": np.array([0.0, 1.0, 0.0])}
    return _Layout(corners, edges, [face], [0], [0, 0, 0, 0])


def _y_layout() -> _Layout:
    tips = np.array([
        [0.6 * np.cos(a), 0.6 * np.sin(a), 0.0]
        for a in (np.pi / 2, np.pi / 2 + 2 * np.pi / 3, np.pi / 2 + 4 * np.pi / 3)
    ])
    corners = np.vstack([tips, np.zeros(3)])
    # bent paths tip->center->tip; stored as pseudo-edges for the oracle
    edges = [(0, 3), (1, 3), (2, 3)]
    return _Layout(corners, edges, [], [], [])


def _edge_path(a: np.ndarray, b: np.ndarray, gap: float, step: float) -> np.ndarray:
    d = b - a
    length = np.linalg.norm(d)
    d = d / length
    p0, p1 = a + gap * d, b - gap * d
    n = max(8, int(np.ceil(np.linalg.norm(p1 - p0) / step)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return p0 + t * (p1 - p0)


def _serpentine_path(face: dict, rng: np.random.Generator,
                     rotate: bool) -> tuple[np.ndarray, list[int]]:
    """Serpentine fill of a face; returns points and turn-apex indices."""
    n = face["normal"]
    ref = np.array([1.0, 0.0, 0.0])
    if abs(n @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    u = np.cross(ref, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    if rotate:
        u, v = v, -u
    half = 0.5 - FACE_MARGIN
    rows = int(rng.integers(5, 8))
    n_pv = int(rng.integers(10, 14))
    dv = 2 * half / (rows - 1)
    pts2, turns = [], []
    for j in range(rows):
        vv = -half + j * dv
        us = np.linspace(-half, half, n_pv)
        if j % 2 == 1:
            us = us[::-1]
        for uu in us:
            pts2.append((uu, vv))
        if j < rows - 1:
            turns.append(len(pts2) - 1)
            pts2.append((us[-1], vv + dv / 3))
            pts2.append((us[-1], vv + 2 * dv / 3))
    pts2 = np.asarray(pts2)
    pts = face["center"] + pts2[:, :1] * u + pts2[:, 1:2] * v
    return pts, turns


def _stroke_times(points: np.ndarray, base_speed: float, turns: list[int],
                  t0: float, rng: np.random.Generator) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    speed = base_speed * rng.uniform(0.9, 1.1, size=seg.shape[0])
    # V-shaped slowdowns spanning ~5 segments around each turn apex
    dip = np.array([0.55, 0.3, 0.12, 0.3, 0.55])
    for t in turns:
        for o, m in zip(range(-2, 3), dip):
            k = t + o
            if 0 <= k < seg.shape[0]:
                speed[k] *= m
    dt = seg / speed
    return t0 + np.concatenate([[0.0], np.cumsum(dt)])


def _make_stroke(points: np.ndarray, turns: list[int], *, t0: float,
                 base_speed: float, color: np.ndarray, width: float,
                 face: dict, canvas_id: str, label: StrokeLabel,
                 jitter: float, rng: np.random.Generator) -> StrokeRecord:
    pts = points + rng.normal(0.0, jitter, size=points.shape) if jitter > 0 \
        else points.copy()
    times = _stroke_times(pts, base_speed, turns, t0, rng)
    n = pts.shape[0]
    pressure = np.clip(rng.normal(0.55, 0.1) + rng.normal(0.0, 0.03, n), 0.0, 1.0)
    tilt_mag = abs(rng.normal(0.45, 0.08))
    tilt_dir = rng.uniform(0.0, 2 * np.pi)
    tilts = np.column_stack([
        tilt_mag * np.cos(tilt_dir) + rng.normal(0.0, 0.02, n),
        tilt_mag * np.sin(tilt_dir) + rng.normal(0.0, 0.02, n),
    ])
    twists = rng.normal(0.0, 0.1, n)
    normal = face["normal"]
    transform = _plane_transform(face["center"], normal)
    camera = face["center"] + 2.5 * normal + np.array([0.0, 0.0, 0.8])
    return StrokeRecord(
        positions=pts,
        timestamps=times,
        pressures=pressure,
        tilts=tilts,
        twists=twists,
        normals=np.tile(normal, (n, 1)),
        ink_color=np.clip(color + rng.normal(0.0, 0.02, 3), 0.0, 1.0),
        ink_width=width,
        camera_position=camera,
        camera_rotation=np.array([0.0, 0.0, 0.0, 1.0]),
        canvas_id=canvas_id,
        canvas_type=CanvasType.PLANE,
        canvas_transform=transform,
        label=label,
    )


def synth_sketch(config: SynthConfig) -> Sketch:
    """Generate a labeled synthetic sketch; deterministic given the seed."""
    rng = np.random.default_rng(config.seed)
    obj = config.object
    if obj in ("cube", "open_box"):
        layout = _cube_layout(open_top=(obj == "open_box"))
    elif obj == "wall":
        layout = _wall_layout()
    elif obj == "y_junction":
        layout = _y_layout()
    else:
        raise ConfigError(f"unknown object {obj!r}")

    step = 0.5 * SHAPE_WIDTH
    strokes: list[StrokeRecord] = []
    cluster_ids: list[int | None] = []
    face_ids: list[int | None] = []
    clock = 0.0

    if obj == "y_junction":
        tips, center = layout.corners[:3], layout.corners[3]
        face = {"center": np.zeros(3), "normal": np.array([0.0, 0.0, 1.0])}
        pairs = [(0, 1), (1, 2), (2, 0)]
        for a, b in pairs:
            for _ in range(config.overdraw_count):
                leg1 = _edge_path(tips[a], center, 0.0, step)
                leg2 = _edge_path(center, tips[b], 0.0, step)
                pts = np.vstack([leg1, leg2[1:]])
                turn = [leg1.shape[0] - 1]
                speed = abs(rng.normal(0.25, 0.03)) + 0.05
                strokes.append(_make_stroke(
                    pts, turn, t0=clock, base_speed=speed,
                    color=np.asarray(SHAPE_COLOR), width=SHAPE_WIDTH,
                    face=face, canvas_id="plane0", label=StrokeLabel.SHAPE,
                    jitter=config.jitter_sigma, rng=rng))
                cluster_ids.append(0)    # the whole Y is one intended cluster
                face_ids.append(None)
                clock = float(strokes[-1].timestamps[-1]) + rng.uniform(0.3, 1.0)
    else:
        gap = EDGE_GAP_WIDTHS * SHAPE_WIDTH
        for eid, (a, b) in enumerate(layout.edges):
            face = layout.faces[layout.edge_canvas_face[eid]]
            for _ in range(config.overdraw_count):
                pts = _edge_path(layout.corners[a], layout.corners[b], gap, step)
                speed = abs(rng.normal(0.25, 0.03)) + 0.05
                strokes.append(_make_stroke(
                    pts, [], t0=clock, base_speed=speed,
                    color=np.asarray(SHAPE_COLOR), width=SHAPE_WIDTH,
                    face=face, canvas_id=f"face{layout.edge_canvas_face[eid]}",
                    label=StrokeLabel.SHAPE,
                    jitter=config.jitter_sigma, rng=rng))
                cluster_ids.append(eid)
                face_ids.append(None)
                clock = float(strokes[-1].timestamps[-1]) + rng.uniform(0.3, 1.0)
        for fid in layout.scribbled_faces:
            face = layout.faces[fid]
            for rep in range(config.scribble_overdraw):
                pts, turns = _serpentine_path(face, rng, rotate=(rep % 2 == 1))
                speed = abs(rng.normal(1.3, 0.15)) + 0.3
                strokes.append(_make_stroke(
                    pts, turns, t0=clock, base_speed=speed,
                    color=np.asarray(SCRIBBLE_COLOR), width=SCRIBBLE_WIDTH,
                    face=face, canvas_id=f"face{fid}",
                    label=StrokeLabel.SCRIBBLE,
                    jitter=config.jitter_sigma, rng=rng))
                cluster_ids.append(None)
                face_ids.append(fid)
                clock = float(strokes[-1].timestamps[-1]) + rng.uniform(0.3, 1.0)

    oracle = {
        "object": obj,
        "params": {
            "jitter_sigma": config.jitter_sigma,
            "overdraw_count": config.overdraw_count,
            "scribble_overdraw": config.scribble_overdraw,
            "seed": config.seed,
        },
        "corners": layout.corners.tolist(),
        "edges": [list(e) for e in layout.edges],
        "faces": [
            {"corners": f["corners"], "edges": f["edges"],
             "center": np.asarray(f["center"]).tolist(),
             "normal": np.asarray(f["normal"]).tolist()}
            for f in layout.faces
        ],
        "scribbled_faces": layout.scribbled_faces,
        "stroke_label": [int(s.label) for s in strokes],
        "stroke_cluster": cluster_ids,
        "stroke_face": face_ids,
    }
    name = f"{obj}-j{config.jitter_sigma:g}-o{config.overdraw_count}-s{config.seed}"
    return Sketch(strokes=tuple(strokes), name=name, oracle=oracle)
