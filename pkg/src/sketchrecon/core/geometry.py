"""Geometric primitives: arc length, KD-tree index, polyline simplification."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateInput


def arc_length(polyline: np.ndarray) -> float:
    """Cumulative length of a polyline, the sum of its segment lengths.

    Never smaller than the straight-line distance between the endpoints.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DegenerateInput("arc_length needs at least 2 points")
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def cumulative_lengths(polyline: np.ndarray) -> np.ndarray:
    """Arc length from the first vertex to each vertex (starts at 0)."""
    pts = np.asarray(polyline, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


class SpatialIndex:
    """KD-tree over a fixed point set.

    Query results match a brute-force linear scan for any query point
    (ties broken by index, as scipy does).
    """

    def __init__(self, points: np.ndarray):
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        if self.points.ndim != 2:
            raise DegenerateInput("SpatialIndex needs an (n, d) point array")
        self.tree = cKDTree(self.points)

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest(self, query: np.ndarray, k: int = 1):
        """Distances and indices of the k nearest points to each query."""
        return self.tree.query(np.asarray(query, dtype=np.float64), k=k)

    def within(self, query: np.ndarray, radius: float) -> list:
        """Indices of points within `radius` of each query point."""
        return self.tree.query_ball_point(
            np.asarray(query, dtype=np.float64), r=float(radius)
        )

    def count_within(self, query: np.ndarray, radius: float) -> int:
        """Total number of (query, point) pairs within `radius`."""
        counts = self.tree.query_ball_point(
            np.asarray(query, dtype=np.float64), r=float(radius),
            return_length=True,
        )
        return int(np.sum(counts))


def _point_segment_dist2(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distances from many points to segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        d = points - a
        return np.einsum("ij,ij->i", d, d)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = points - proj
    return np.einsum("ij,ij->i", d, d)


def rdp_mask(polyline: np.ndarray, epsilon: float) -> np.ndarray:
    """Ramer-Douglas-Peucker keep-mask for a polyline.

    Iterative stack form; keeps endpoints, then recursively the farthest
    vertex from each chord while it deviates more than epsilon.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    n = pts.shape[0]
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    if n <= 2:
        return keep
    eps2 = float(epsilon) ** 2
    stack = [(0, n - 1)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue
        seg = pts[first + 1:last]
        d2 = _point_segment_dist2(seg, pts[first], pts[last])
        idx = int(np.argmax(d2))
        if d2[idx] > eps2:
            split = first + 1 + idx
            keep[split] = True
            stack.append((first, split))
            stack.append((split, last))
    return keep


def rdp(polyline: np.ndarray, epsilon: float) -> np.ndarray:
    """Simplified polyline (the kept vertices, endpoints always included)."""
    pts = np.asarray(polyline, dtype=np.float64)
    return pts[rdp_mask(pts, epsilon)]


def dedupe_points(points: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Drop consecutive points closer than `tol` (keeps the first of a run)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] <= 1:
        return pts
    keep = [0]
    for i in range(1, pts.shape[0]):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) >= tol:
            keep.append(i)
    return pts[keep]


def aabb(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64)
    return pts.min(axis=0), pts.max(axis=0)


def scale_box(lo: np.ndarray, hi: np.ndarray, factor: float) -> tuple[np.ndarray, np.ndarray]:
    """Scale an axis-aligned box about its center."""
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * float(factor)
    return center - half, center + half


def points_in_box(points: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                  pad: float = 0.0) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return np.all((pts >= lo - pad) & (pts <= hi + pad), axis=1)
