"""Per-stroke feature extraction for stroke-type classification.

Eleven scalar features are computed for every stroke, in fixed column
order (see FEATURE_NAMES). Geometry-only, stylus-only, union and
intersection subsets are exposed as named boolean masks over the columns;
the two stylus channels that carry no class signal (mean pressure, mean
tilt) are excluded from every subset, mirroring the published relevance
table.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core.geometry import arc_length, rdp_mask
from .core.model import CanvasType, Sketch, StrokeRecord
from .errors import DegenerateInput

FEATURE_NAMES = (
    "avg_pressure", "avg_speed", "avg_tilt", "color_shift", "density",
    "dist", "duration", "length", "order", "prim_seg_count", "straightness",
)

_GEO_FEATURES = {"density", "dist", "length", "prim_seg_count", "straightness"}
_STY_FEATURES = {"avg_speed", "color_shift", "density", "duration", "order",
                 "prim_seg_count"}


def _mask(names: set[str]) -> np.ndarray:
    return np.array([n in names for n in FEATURE_NAMES], dtype=bool)


SUBSET_MASKS = {
    "geo": _mask(_GEO_FEATURES),
    "sty": _mask(_STY_FEATURES),
    "geo_or_sty": _mask(_GEO_FEATURES | _STY_FEATURES),
    "geo_and_sty": _mask(_GEO_FEATURES & _STY_FEATURES),
}

COLOR_SHIFT_RADIUS_WIDTHS = 2.5   # neighbor reach, times mean pair width
RDP_EPS_WIDTHS = 0.5              # simplification tolerance, times ink width
SPEED_DIP_FRACTION = 0.5          # local-minimum cutoff, times mean speed


@dataclass(frozen=True)
class FeatureVector:
    avg_pressure: float
    avg_speed: float
    avg_tilt: float
    color_shift: float
    density: float
    dist: float
    duration: float
    length: float
    order: float
    prim_seg_count: float
    straightness: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES])


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows in stroke order, optional labels, and subset masks."""

    values: np.ndarray                 # (n, 11)
    labels: np.ndarray | None = None   # (n,) ints, or None when unlabeled

    @property
    def subset_masks(self) -> dict[str, np.ndarray]:
        return SUBSET_MASKS

    def __len__(self) -> int:
        return self.values.shape[0]

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(*(float(v) for v in self.values[i]))

    def column(self, name: str) -> np.ndarray:
        return self.values[:, FEATURE_NAMES.index(name)]


def _segment_speeds(stroke: StrokeRecord) -> np.ndarray:
    """Per-segment speeds, skipping zero-duration segments."""
    seg = np.linalg.norm(np.diff(stroke.positions, axis=0), axis=1)
    dt = np.diff(stroke.timestamps)
    ok = dt > 0.0
    return seg[ok] / dt[ok]


def prim_seg_count(stroke: StrokeRecord) -> int:
    """Count pronounced slowdowns: strict local minima of the smoothed
    speed profile that drop below half the stroke's mean speed.

    Returns 0 for strokes with fewer than 3 vertices.
    """
    if len(stroke) < 3:
        return 0
    v = _segment_speeds(stroke)
    if v.shape[0] < 3:
        return 0
    padded = np.pad(v, 2, mode="edge")
    smooth = np.convolve(padded, np.full(5, 0.2), mode="valid")
    cutoff = SPEED_DIP_FRACTION * float(v.mean())
    interior = slice(1, smooth.shape[0] - 1)
    minima = (
        (smooth[interior] < smooth[:-2])
        & (smooth[interior] < smooth[2:])
        & (smooth[interior] < cutoff)
    )
    return int(np.count_nonzero(minima))


def _canvas_scales(transform: np.ndarray) -> np.ndarray:
    """Per-axis scale factors of the canvas transform's linear part."""
    return np.linalg.norm(transform[:3, :3], axis=0)


def canvas_geodesic(stroke: StrokeRecord, p0: np.ndarray, p1: np.ndarray) -> float:
    """Geodesic distance between two points on the stroke's parent canvas.

    Plane and Cube canvases use the Euclidean distance (the latter as an
    approximation); Sphere uses the great-circle arc of the transformed
    sphere; Cylinder unrolls the lateral surface.
    """
    kind = stroke.canvas_type
    if kind in (CanvasType.PLANE, CanvasType.CUBE):
        return float(np.linalg.norm(p1 - p0))
    inv = np.linalg.inv(stroke.canvas_transform)
    q0 = (inv @ np.append(p0, 1.0))[:3]
    q1 = (inv @ np.append(p1, 1.0))[:3]
    scales = _canvas_scales(stroke.canvas_transform)
    if kind == CanvasType.SPHERE:
        r0, r1 = np.linalg.norm(q0), np.linalg.norm(q1)
        if r0 == 0.0 or r1 == 0.0:
            return float(np.linalg.norm(p1 - p0))
        u0, u1 = q0 / r0, q1 / r1
        angle = np.arctan2(np.linalg.norm(np.cross(u0, u1)),
                           float(np.clip(u0 @ u1, -1.0, 1.0)))
        radius = float(scales.mean())
        return float(radius * angle)
    # cylinder: radius-1 lateral surface around the canvas z axis
    a0 = np.arctan2(q0[1], q0[0])
    a1 = np.arctan2(q1[1], q1[0])
    da = np.arctan2(np.sin(a1 - a0), np.cos(a1 - a0))   # wraparound
    radius = float(scales[:2].mean())
    dz = (q1[2] - q0[2]) * scales[2]
    return float(np.hypot(radius * da, dz))


def _color_shift(sketch: Sketch) -> np.ndarray:
    """Mean ink-color L2 distance to strokes within the width-scaled reach."""
    n = len(sketch)
    trees = [cKDTree(s.positions) for s in sketch.strokes]
    boxes = [(s.positions.min(axis=0), s.positions.max(axis=0))
             for s in sketch.strokes]
    neighbor_colors: list[list[np.ndarray]] = [[] for _ in range(n)]
    for i in range(n):
        si = sketch.strokes[i]
        for j in range(i + 1, n):
            sj = sketch.strokes[j]
            reach = COLOR_SHIFT_RADIUS_WIDTHS * 0.5 * (si.ink_width + sj.ink_width)
            lo_i, hi_i = boxes[i]
            lo_j, hi_j = boxes[j]
            if np.any(lo_i - reach > hi_j) or np.any(lo_j - reach > hi_i):
                continue
            d, _ = trees[j].query(si.positions, k=1, distance_upper_bound=reach)
            if np.isfinite(d).any():
                neighbor_colors[i].append(sj.ink_color)
                neighbor_colors[j].append(si.ink_color)
    out = np.zeros(n)
    for i in range(n):
        if neighbor_colors[i]:
            diffs = np.asarray(neighbor_colors[i]) - sketch.strokes[i].ink_color
            out[i] = float(np.linalg.norm(diffs, axis=1).mean())
    return out


def extract_features(sketch: Sketch) -> FeatureMatrix:
    """Compute the 11-feature row for every stroke, in stroke order."""
    n = len(sketch)
    for idx, s in enumerate(sketch.strokes):
        if len(s) < 2:
            raise DegenerateInput(f"stroke {idx} has fewer than 2 vertices")
    color_shift = _color_shift(sketch)
    rows = np.zeros((n, len(FEATURE_NAMES)))
    for i, s in enumerate(sketch.strokes):
        speeds = _segment_speeds(s)
        length = arc_length(s.positions)
        dist = canvas_geodesic(s, s.positions[0], s.positions[-1])
        kept = int(np.count_nonzero(
            rdp_mask(s.positions, RDP_EPS_WIDTHS * s.ink_width)))
        rows[i] = [
            float(s.pressures.mean()),
            float(speeds.mean()) if speeds.size else 0.0,
            float(np.linalg.norm(s.tilts, axis=1).mean()),
            color_shift[i],
            kept / len(s),
            dist,
            float(s.timestamps[-1] - s.timestamps[0]),
            length,
            i / (n - 1) if n > 1 else 0.0,
            float(prim_seg_count(s)),
            float(np.clip(dist / length, 0.0, 1.0)) if length > 0 else 0.0,
        ]
    labels = sketch.labels()
    has_labels = np.any(labels != -2)
    return FeatureMatrix(values=rows, labels=labels if has_labels else None)


def features_to_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    header = list(FEATURE_NAMES)
    if matrix.labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(matrix)):
            row = [repr(float(v)) for v in matrix.values[i]]
            if matrix.labels is not None:
                row.append(str(int(matrix.labels[i])))
            writer.writerow(row)


def features_from_csv(path: str | Path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [row for row in reader]
    if header[: len(FEATURE_NAMES)] != list(FEATURE_NAMES):
        from .errors import SchemaMismatch
        raise SchemaMismatch(f"unexpected feature CSV header in {path}")
    has_labels = len(header) > len(FEATURE_NAMES)
    values = np.array([[float(v) for v in row[: len(FEATURE_NAMES)]]
                       for row in data])
    labels = (np.array([int(row[len(FEATURE_NAMES)]) for row in data])
              if has_labels else None)
    return FeatureMatrix(values=values, labels=labels)
