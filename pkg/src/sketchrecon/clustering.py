"""Density-based clustering over precomputed pairwise scores.

Similarity scores are mapped to distances (d = 1 - score, so any
non-positive similarity lands at d >= 1 and can never merge at the
epsilon values this module selects), epsilon is chosen from the knee of
the k-distance curve, and the clustering itself is standard DBSCAN on
the precomputed metric. With min_pts = 2 the result coincides with the
connected components of the epsilon-threshold graph.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput

NOISE = -1
KNEE_FLAT_TOL = 1e-9


class ScoreKind(enum.Enum):
    SHAPE = "shape"
    SCRIBBLE = "scribble"


@dataclass(frozen=True)
class ScoreMatrix:
    """Symmetric pairwise similarity matrix (diagonal unused)."""

    values: np.ndarray
    kind: ScoreKind

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DegenerateInput("score matrix must be square")
        if not np.allclose(v, v.T, atol=1e-9):
            raise DegenerateInput("score matrix must be symmetric")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Clustering:
    labels: np.ndarray      # cluster id per item, NOISE (-1) for isolated
    epsilon: float
    min_pts: int

    def n_clusters(self) -> int:
        ids = self.labels[self.labels != NOISE]
        return int(np.unique(ids).size)

    def members(self, cluster_id: int) -> np.ndarray:
        return np.nonzero(self.labels == cluster_id)[0]


def score_to_distance(matrix: ScoreMatrix) -> np.ndarray:
    """d = 1 - score; negative scores map beyond 1 and never merge."""
    d = 1.0 - matrix.values
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def k_distance_curve(distances: np.ndarray, k: int = 1) -> np.ndarray:
    """Each item's k-th nearest-neighbor distance, sorted descending."""
    d = np.asarray(distances, dtype=np.float64).copy()
    np.fill_diagonal(d, np.inf)
    kth = np.sort(d, axis=1)[:, k - 1]
    return np.sort(kth)[::-1]


def knee_index(curve: np.ndarray, flat_tol: float = KNEE_FLAT_TOL) -> int | None:
    """Index of maximum perpendicular deviation from the endpoint chord.

    None when the curve is flat (max deviation below flat_tol).
    """
    n = curve.shape[0]
    if n < 3:
        return None
    x = np.arange(n, dtype=np.float64)
    p0 = np.array([0.0, curve[0]])
    p1 = np.array([n - 1.0, curve[-1]])
    chord = p1 - p0
    norm = np.linalg.norm(chord)
    if norm == 0.0:
        return None
    rel = np.column_stack([x, curve]) - p0
    dev = np.abs(rel[:, 0] * chord[1] - rel[:, 1] * chord[0]) / norm
    if float(dev.max()) < flat_tol:
        return None
    return int(np.argmax(dev))


def select_epsilon(distances: np.ndarray, k: int = 1) -> float:
    """Neighborhood radius from the knee of the k-distance plot.

    Falls back to the median of the curve when it is flat.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.shape[0] < 3:
        raise DegenerateInput("epsilon selection needs at least 3 items")
    curve = k_distance_curve(d, k=k)
    idx = knee_index(curve)
    if idx is None:
        return float(np.median(curve))
    return float(curve[idx])


def dbscan(distances: np.ndarray, epsilon: float, min_pts: int = 2) -> Clustering:
    """DBSCAN over a precomputed symmetric distance matrix.

    Neighborhoods are closed balls (d <= epsilon) and include the point
    itself, so min_pts = 2 means "has at least one neighbor". Expansion
    order is by ascending index, making labels deterministic.
    """
    d = np.asarray(distances, dtype=np.float64)
    n = d.shape[0]
    within = d <= epsilon
    np.fill_diagonal(within, True)
    neighbor_count = within.sum(axis=1)
    core = neighbor_count >= min_pts

    labels = np.full(n, NOISE, dtype=int)
    visited = np.zeros(n, dtype=bool)
    current = 0
    for start in range(n):
        if visited[start] or not core[start]:
            continue
        queue = [start]
        visited[start] = True
        labels[start] = current
        while queue:
            p = queue.pop(0)
            if not core[p]:
                continue
            for q in np.nonzero(within[p])[0]:
                if labels[q] == NOISE:
                    labels[q] = current   # border point adoption
                if not visited[q]:
                    visited[q] = True
                    labels[q] = current
                    queue.append(q)
        current += 1
    return Clustering(labels=labels, epsilon=float(epsilon), min_pts=int(min_pts))


SIMILARITY_GAP = 0.25     # bimodality gap on the unit score-distance scale
SIMILARITY_LIMIT = 0.5    # only score >= 0.5 neighbors can inform epsilon


def similar_epsilon(distances: np.ndarray, k: int = 1,
                    similarity_limit: float = SIMILARITY_LIMIT,
                    gap_threshold: float = SIMILARITY_GAP) -> float:
    """Epsilon for score-derived distances.

    Only genuinely similar neighbors (d < similarity_limit) inform the
    choice; weak coincidences (crossing strokes score well under 0.5)
    cannot set the merge radius. When the k-th neighbor values split into
    two groups separated by a material gap, epsilon sits at the top of
    the low group (isolating the far items); otherwise every item keeps
    its k-th neighbor (epsilon = the largest value). With no similar pair
    at all, epsilon is 0 and every item stays a singleton.
    """
    d = np.asarray(distances, dtype=np.float64).copy()
    np.fill_diagonal(d, np.inf)
    kth = np.sort(d, axis=1)[:, k - 1]
    vals = np.sort(kth[kth < similarity_limit])
    if vals.size == 0:
        return 0.0
    if vals.size == 1:
        return float(vals[0])
    gaps = np.diff(vals)
    gi = int(np.argmax(gaps))
    if gaps[gi] >= gap_threshold:
        return float(vals[gi])
    return float(vals[-1])
