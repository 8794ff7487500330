"""Minimal-weight triangulation of closed 3D polygons.

Interval dynamic programming over the polygon's vertex order. Weights are
additive per triangle (area) plus an adjacency term (1 - cos of the
dihedral angle between triangles sharing an edge). The dihedral coupling
is handled exactly by augmenting the DP state with the apex of the
triangle on the outside of each chord; with a zero dihedral coefficient
the classic O(n^3) recurrence is used instead.

Triangle normals are taken in ascending-index vertex order, which is
orientation-consistent across a triangulation, so coplanar neighbors
contribute zero penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput

DEFAULT_AREA_COEFF = 1.0
DEFAULT_DIHEDRAL_COEFF = 0.1


@dataclass(frozen=True)
class TriangulationWeights:
    area_coeff: float = DEFAULT_AREA_COEFF
    dihedral_coeff: float = DEFAULT_DIHEDRAL_COEFF


def _areas_and_normals(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """AREA[i,m,j] and unit NORMAL[i,m,j] for all ascending triples."""
    n = pts.shape[0]
    cross = np.cross(pts[None, :, None, :] - pts[:, None, None, :],
                     pts[None, None, :, :] - pts[:, None, None, :])
    norm = np.linalg.norm(cross, axis=3)
    area = 0.5 * norm
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(norm[..., None] > 1e-15, cross / norm[..., None], 0.0)
    return area, unit


def dihedral_penalty(p_shared_a: np.ndarray, tri1: tuple, tri2: tuple,
                     normals: np.ndarray) -> float:
    """1 - cos of the dihedral between two ascending-index triangles."""
    n1 = normals[tri1[0], tri1[1], tri1[2]]
    n2 = normals[tri2[0], tri2[1], tri2[2]]
    return float(1.0 - n1 @ n2)


def triangulation_weight(points: np.ndarray, triangles: np.ndarray,
                         weights: TriangulationWeights) -> float:
    """Recompute a triangulation's total weight from its triangle list.

    Independent of the DP: sums per-triangle areas and, for every pair of
    triangles sharing an edge, the dihedral penalty.
    """
    pts = np.asarray(points, dtype=np.float64)
    tris = [tuple(sorted(map(int, t))) for t in np.asarray(triangles)]
    area, normals = _areas_and_normals(pts)
    total = weights.area_coeff * sum(area[t] for t in tris)
    if weights.dihedral_coeff != 0.0:
        edge_owner: dict[tuple[int, int], list[tuple]] = {}
        for t in tris:
            for e in ((t[0], t[1]), (t[0], t[2]), (t[1], t[2])):
                edge_owner.setdefault(e, []).append(t)
        for owners in edge_owner.values():
            for a in range(len(owners)):
                for b in range(a + 1, len(owners)):
                    n1 = normals[owners[a]]
                    n2 = normals[owners[b]]
                    total += weights.dihedral_coeff * float(1.0 - n1 @ n2)
    return float(total)


def _check_polygon(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise DegenerateInput("polygon needs at least 3 vertices")
    rounded = {tuple(p) for p in pts.round(12).tolist()}
    if len(rounded) != pts.shape[0]:
        raise DegenerateInput("polygon has repeated vertices")
    return pts


def _triangulate_area_only(pts: np.ndarray, area: np.ndarray,
                           area_coeff: float) -> tuple[np.ndarray, float]:
    n = pts.shape[0]
    cost = np.zeros((n, n))
    choice = np.full((n, n), -1, dtype=int)
    for span in range(2, n):
        for i in range(0, n - span):
            j = i + span
            ms = np.arange(i + 1, j)
            totals = (area_coeff * area[i, ms, j]
                      + cost[i, ms] + cost[ms, j])
            k = int(np.argmin(totals))
            cost[i, j] = float(totals[k])
            choice[i, j] = int(ms[k])
    triangles = []
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        m = choice[i, j]
        triangles.append((i, m, j))
        stack.append((i, m))
        stack.append((m, j))
    return np.asarray(triangles, dtype=int), float(cost[0, n - 1])


def _triangulate_with_dihedral(pts: np.ndarray, area: np.ndarray,
                               normals: np.ndarray, area_coeff: float,
                               dihedral_coeff: float) -> tuple[np.ndarray, float]:
    """Apex-augmented interval DP.

    g[i, j, a] is the optimal cost of the sub-polygon i..j given that the
    triangle outside chord (i, j) has apex a; the penalty across (i, j)
    is charged when the inside triangle is chosen.
    """
    n = pts.shape[0]
    g = np.zeros((n, n, n))
    choice = np.zeros((n, n, n), dtype=int)
    for span in range(2, n):
        for i in range(0, n - span):
            j = i + span
            ms = np.arange(i + 1, j)
            inner = (area_coeff * area[i, ms, j]
                     + g[i, ms, j] + g[ms, j, i])
            inner_normals = normals[i, ms, j]          # (L-1, 3)
            outside = np.concatenate([np.arange(0, i), np.arange(j + 1, n)])
            if outside.size:
                # outer triangle of chord (i, j) with apex a, ascending order
                outer_n = np.empty((outside.size, 3))
                below = outside < i
                if below.any():
                    outer_n[below] = normals[outside[below], i, j]
                if (~below).any():
                    outer_n[~below] = normals[i, j, outside[~below]]
                pen = 1.0 - inner_normals @ outer_n.T   # (L-1, n_out)
                totals = inner[:, None] + dihedral_coeff * pen
                ks = np.argmin(totals, axis=0)
                g[i, j, outside] = totals[ks, np.arange(outside.size)]
                choice[i, j, outside] = ms[ks]
            # root-style entry (no outer triangle): stored at apex = i
            k = int(np.argmin(inner))
            g[i, j, i] = float(inner[k])
            choice[i, j, i] = int(ms[k])

    triangles = []
    total = float(g[0, n - 1, 0])
    stack = [(0, n - 1, 0, True)]
    while stack:
        i, j, a, is_root = stack.pop()
        if j - i < 2:
            continue
        m = int(choice[i, j, a if not is_root else i])
        triangles.append((i, m, j))
        stack.append((i, m, j, False))
        stack.append((m, j, i, False))
    return np.asarray(triangles, dtype=int), total


def triangulate_polygon(points: np.ndarray,
                        weights: TriangulationWeights | None = None,
                        ) -> tuple[np.ndarray, float]:
    """Exact minimal-weight triangulation of a closed polygon.

    Returns (triangles as ascending index triples, total weight). Raises
    DegenerateInput for under-3-vertex or repeated-vertex input.
    """
    w = weights or TriangulationWeights()
    pts = _check_polygon(points)
    area, normals = _areas_and_normals(pts)
    if w.dihedral_coeff == 0.0:
        return _triangulate_area_only(pts, area, w.area_coeff)
    return _triangulate_with_dihedral(pts, area, normals,
                                      w.area_coeff, w.dihedral_coeff)


def all_triangulations(n: int) -> list[list[tuple[int, int, int]]]:
    """Every triangulation of an n-gon (Catalan enumeration), as ascending
    index triples. Intended for brute-force oracles on small n."""
    def rec(i: int, j: int) -> list[list[tuple[int, int, int]]]:
        if j - i < 2:
            return [[]]
        out = []
        for m in range(i + 1, j):
            for left in rec(i, m):
                for right in rec(m, j):
                    out.append(left + [(i, m, j)] + right)
        return out

    return rec(0, n - 1)
