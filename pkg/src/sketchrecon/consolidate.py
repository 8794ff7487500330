"""Shape-stroke clustering and consolidation.

Strokes classified as boundaries are cleaned and resampled, scored
pairwise by tangent agreement along mutually-close sample runs, grouped
by density clustering, and each group is reduced to one (or, after
splitting at bifurcations, several) four-control-point cubic curves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import cKDTree

from .clustering import (Clustering, ScoreKind, ScoreMatrix, dbscan,
                         score_to_distance, similar_epsilon)
from .core.geometry import cumulative_lengths, dedupe_points
from .core.model import StrokeRecord
from .errors import DegenerateInput
from .splines import (bezier_eval, bezier_length, bezier_tangent,
                      fit_clamped_bspline, fit_cubic_bezier, resample_even,
                      spline_points, spline_tangents)

MATCH_COEFF = 1.5          # neighbor reach, times min pair ink width
HOOK_ANGLE_DEG = 60.0      # end-tangent deviation that marks a hook
BIFURCATION_RATIO = 0.05   # min/max branch length that forces a split
MIN_RUN = 2                # samples; shorter coincidences are ignored
SAMPLE_SPACING_WIDTHS = 0.5
MLS_MAX_ITER = 10
MLS_STOP_FRACTION = 1e-3   # of the neighborhood radius H


@dataclass(frozen=True)
class PreprocessedStroke:
    """Cleaned, spline-smoothed and evenly resampled stroke."""

    stroke_id: int
    points: np.ndarray     # (m, 3)
    tangents: np.ndarray   # (m, 3), unit
    width: float


@dataclass(frozen=True)
class MatchingSequence:
    """A maximal run of samples on one stroke with counterparts on another."""

    indices_a: np.ndarray
    indices_b: np.ndarray
    mean_tangent_a: np.ndarray
    mean_tangent_b: np.ndarray


@dataclass(frozen=True)
class ConsolidatedCurve:
    """A four-control-point cubic consolidating one stroke sub-cluster."""

    control_points: np.ndarray   # (4, 3)
    source_cluster_id: int
    sub_index: int
    mean_width: float
    source_stroke_ids: tuple[int, ...]

    def evaluate(self, t) -> np.ndarray:
        return bezier_eval(self.control_points, t)

    def tangent_at(self, t: float) -> np.ndarray:
        return bezier_tangent(self.control_points, t)

    def length(self) -> float:
        return bezier_length(self.control_points)

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return self.control_points[0], self.control_points[3]

    def to_dict(self) -> dict:
        return {
            "control_points": self.control_points.tolist(),
            "source_cluster_id": self.source_cluster_id,
            "sub_index": self.sub_index,
            "mean_width": self.mean_width,
            "source_stroke_ids": list(self.source_stroke_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConsolidatedCurve":
        return cls(
            control_points=np.asarray(d["control_points"], dtype=np.float64),
            source_cluster_id=int(d["source_cluster_id"]),
            sub_index=int(d["sub_index"]),
            mean_width=float(d["mean_width"]),
            source_stroke_ids=tuple(d["source_stroke_ids"]),
        )


def _trim_hook(points: np.ndarray, width: float) -> np.ndarray:
    """Drop a leading hook: vertices within 1.5 widths of the start whose
    end tangent turns away from what follows by more than 60 degrees."""
    n = points.shape[0]
    if n < 4:
        return points
    cum = cumulative_lengths(points)
    reach = MATCH_COEFF * width
    h = int(np.searchsorted(cum, reach, side="left")) - 1
    h = min(h, n - 3)
    if h < 1:
        return points
    first = points[1] - points[0]
    fn = np.linalg.norm(first)
    if fn == 0.0:
        return points
    first /= fn
    after = np.diff(points[h:min(n, h + 6)], axis=0)
    mean_dir = after.sum(axis=0)
    mn = np.linalg.norm(mean_dir)
    if mn == 0.0:
        return points
    mean_dir /= mn
    angle = np.degrees(np.arccos(np.clip(first @ mean_dir, -1.0, 1.0)))
    if angle > HOOK_ANGLE_DEG:
        return points[h:]
    return points


def preprocess_stroke(stroke: StrokeRecord, stroke_id: int = -1) -> PreprocessedStroke:
    """Dedupe, trim end hooks, smooth with a clamped cubic fit, resample
    at half-width spacing and attach unit tangents."""
    pts = dedupe_points(stroke.positions, tol=1e-6)
    if pts.shape[0] < 2:
        raise DegenerateInput("all stroke vertices coincide")
    pts = _trim_hook(pts, stroke.ink_width)
    pts = _trim_hook(pts[::-1], stroke.ink_width)[::-1]
    n = pts.shape[0]
    n_ctrl = int(np.clip(np.ceil(n / 4), 4, 16))
    spline = fit_clamped_bspline(pts, n_ctrl)
    params = resample_even(spline, SAMPLE_SPACING_WIDTHS * stroke.ink_width)
    return PreprocessedStroke(
        stroke_id=stroke_id,
        points=spline_points(spline, params),
        tangents=spline_tangents(spline, params),
        width=float(stroke.ink_width),
    )


def _mean_unit(vectors: np.ndarray) -> np.ndarray:
    m = vectors.mean(axis=0)
    n = np.linalg.norm(m)
    return m / n if n > 1e-12 else vectors[0]


def matching_sequences(a: PreprocessedStroke, b: PreprocessedStroke,
                       tree_b: cKDTree | None = None,
                       coeff: float = MATCH_COEFF) -> list[MatchingSequence]:
    """Maximal runs (>= 2 samples) of a's samples having a counterpart on b
    within `coeff` times the smaller ink width."""
    reach = coeff * min(a.width, b.width)
    tree = tree_b if tree_b is not None else cKDTree(b.points)
    dist, idx = tree.query(a.points, k=1, distance_upper_bound=reach)
    matched = np.isfinite(dist)
    sequences: list[MatchingSequence] = []
    i = 0
    m = matched.shape[0]
    while i < m:
        if not matched[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and matched[j + 1]:
            j += 1
        if j - i + 1 >= MIN_RUN:
            ia = np.arange(i, j + 1)
            ib = np.unique(idx[ia])
            sequences.append(MatchingSequence(
                indices_a=ia,
                indices_b=ib,
                mean_tangent_a=_mean_unit(a.tangents[ia]),
                mean_tangent_b=_mean_unit(b.tangents[ib]),
            ))
        i = j + 1
    return sequences


def _one_way_score(a: PreprocessedStroke, b: PreprocessedStroke,
                   tree_b: cKDTree, coeff: float = MATCH_COEFF) -> float:
    seqs = matching_sequences(a, b, tree_b, coeff)
    if not seqs:
        return 0.0
    dots = [abs(float(s.mean_tangent_a @ s.mean_tangent_b)) for s in seqs]
    return float(np.mean(dots))


def shape_score(a: PreprocessedStroke, b: PreprocessedStroke,
                tree_a: cKDTree | None = None,
                tree_b: cKDTree | None = None,
                coeff: float = MATCH_COEFF) -> float:
    """Tangent-agreement similarity in [0, 1], symmetrized by averaging
    the two run decompositions. Opposite drawing directions still match
    (absolute tangent dot)."""
    ta = tree_a if tree_a is not None else cKDTree(a.points)
    tb = tree_b if tree_b is not None else cKDTree(b.points)
    s = 0.5 * (_one_way_score(a, b, tb, coeff) + _one_way_score(b, a, ta, coeff))
    return float(np.clip(s, 0.0, 1.0))


def shape_score_matrix(strokes: list[PreprocessedStroke],
                       coeff: float = MATCH_COEFF,
                       threads: int = 1) -> ScoreMatrix:
    n = len(strokes)
    trees = [cKDTree(s.points) for s in strokes]
    values = np.zeros((n, n))

    def row(i: int) -> list[float]:
        return [shape_score(strokes[i], strokes[j], trees[i], trees[j], coeff)
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
    return ScoreMatrix(values=values, kind=ScoreKind.SHAPE)


def promote_singletons(labels: np.ndarray) -> np.ndarray:
    """Give every noise item its own cluster id; a stroke drawn once is
    still an edge."""
    out = labels.copy()
    next_id = out.max() + 1 if np.any(out >= 0) else 0
    for i in np.nonzero(out < 0)[0]:
        out[i] = next_id
        next_id += 1
    return out


def cluster_shape_strokes(strokes: list[PreprocessedStroke],
                          epsilon: float | None = None,
                          coeff: float = MATCH_COEFF,
                          threads: int = 1) -> Clustering:
    """Score, convert to distances, select epsilon among similar pairs,
    and run DBSCAN; isolated strokes become singleton clusters."""
    matrix = shape_score_matrix(strokes, coeff, threads)
    distances = score_to_distance(matrix)
    if epsilon is None:
        epsilon = similar_epsilon(distances, k=1)
    result = dbscan(distances, epsilon, min_pts=2)
    return Clustering(labels=promote_singletons(result.labels),
                      epsilon=result.epsilon, min_pts=result.min_pts)


# --- thinning / bifurcation / consolidation over cluster point clouds ---

def thin_cluster(points: np.ndarray, neighborhood: float,
                 max_iter: int = MLS_MAX_ITER) -> np.ndarray:
    """Moving-least-squares thinning: each point moves to its projection on
    the principal line of its H-radius, Gaussian-weighted neighborhood.
    Stops once the largest displacement drops below 1e-3 H."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 4:
        raise DegenerateInput("thinning needs at least 4 points")
    if neighborhood <= 0:
        raise DegenerateInput("neighborhood radius must be positive")
    sigma = neighborhood / 3.0
    current = pts.copy()
    for _ in range(max_iter):
        tree = cKDTree(current)
        neighbor_lists = tree.query_ball_point(current, neighborhood)
        moved = current.copy()
        for i, idx in enumerate(neighbor_lists):
            if len(idx) < 2:
                continue
            local = current[idx]
            d2 = np.einsum("ij,ij->i", local - current[i], local - current[i])
            w = np.exp(-d2 / (2.0 * sigma * sigma))
            wsum = w.sum()
            center = (w[:, None] * local).sum(axis=0) / wsum
            centered = local - center
            cov = (w[:, None] * centered).T @ centered / wsum
            eigvals, eigvecs = np.linalg.eigh(cov)
            axis = eigvecs[:, -1]
            moved[i] = center + ((current[i] - center) @ axis) * axis
        disp = float(np.linalg.norm(moved - current, axis=1).max())
        current = moved
        if disp < MLS_STOP_FRACTION * neighborhood:
            break
    return current


def _emst_edges(points: np.ndarray) -> list[tuple[int, int, float]]:
    """Euclidean minimum spanning tree edges (dense O(n^2) build)."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        return []
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    tree = minimum_spanning_tree(dist).tocoo()
    edges = [(int(i), int(j), float(w))
             for i, j, w in zip(tree.row, tree.col, tree.data)]
    # A zero-weight MST edge (coincident points) is dropped by the sparse
    # representation; reattach such points to keep the tree spanning.
    connected = set()
    for i, j, _ in edges:
        connected.add(i)
        connected.add(j)
    if len(connected) < n and n > 1:
        for i in range(n):
            if i not in connected:
                order = np.argsort(dist[i])
                j = int(order[0]) if order[0] != i else int(order[1])
                edges.append((i, j, float(dist[i, j])))
                connected.add(i)
    return edges


def _adjacency(n: int, edges: list[tuple[int, int, float]]) -> list[list[tuple[int, float]]]:
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for i, j, w in edges:
        adj[i].append((j, w))
        adj[j].append((i, w))
    return adj


def detect_and_split(points: np.ndarray,
                     ratio_threshold: float = BIFURCATION_RATIO) -> list[np.ndarray]:
    """Split a thinned cluster cloud at significant EMST bifurcations.

    A degree->=3 tree vertex is a bifurcation when, after removing it, the
    shortest resulting branch is at least `ratio_threshold` of the longest
    (by cumulative edge length). Marked vertices are duplicated into each
    incident component; recursion continues until no vertex qualifies.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        return [pts]
    edges = _emst_edges(pts)
    adj = _adjacency(n, edges)

    marked = []
    for v in range(n):
        if len(adj[v]) < 3:
            continue
        lengths = []
        seen = {v}
        for start, w0 in adj[v]:
            if start in seen:
                continue
            total, stack = w0, [start]
            comp_seen = {v, start}
            while stack:
                u = stack.pop()
                for nb, w in adj[u]:
                    if nb not in comp_seen:
                        comp_seen.add(nb)
                        total += w
                        stack.append(nb)
            lengths.append(total)
        if len(lengths) >= 3 and max(lengths) > 0:
            if min(lengths) / max(lengths) >= ratio_threshold:
                marked.append(v)
    if not marked:
        return [pts]

    marked_set = set(marked)
    comp = np.full(n, -1, dtype=int)
    n_comp = 0
    for start in range(n):
        if comp[start] != -1 or start in marked_set:
            continue
        stack = [start]
        comp[start] = n_comp
        while stack:
            u = stack.pop()
            for nb, _ in adj[u]:
                if nb not in marked_set and comp[nb] == -1:
                    comp[nb] = n_comp
                    stack.append(nb)
        n_comp += 1

    groups: list[list[int]] = [[] for _ in range(n_comp)]
    for i in range(n):
        if comp[i] >= 0:
            groups[comp[i]].append(i)
    # duplicate each marked vertex into every incident component
    extras: list[list[int]] = [[] for _ in range(n_comp)]
    for v in marked:
        touched = {comp[nb] for nb, _ in adj[v] if comp[nb] >= 0}
        for c in touched:
            extras[c].append(v)

    out: list[np.ndarray] = []
    for c in range(n_comp):
        idx = groups[c] + extras[c]
        sub = pts[idx]
        out.extend(detect_and_split(sub, ratio_threshold))
    return out


def _order_along_tree(points: np.ndarray) -> np.ndarray:
    """Order points along the EMST diameter path; off-path points slot in
    after their nearest path vertex (ties by distance, then index)."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n <= 2:
        return pts
    edges = _emst_edges(pts)
    adj = _adjacency(n, edges)

    def farthest(src: int) -> tuple[int, np.ndarray, np.ndarray]:
        dist = np.full(n, np.inf)
        parent = np.full(n, -1, dtype=int)
        dist[src] = 0.0
        stack = [src]
        while stack:
            u = stack.pop()
            for nb, w in adj[u]:
                if dist[u] + w < dist[nb]:
                    dist[nb] = dist[u] + w
                    parent[nb] = u
                    stack.append(nb)
        far = int(np.argmax(np.where(np.isfinite(dist), dist, -1.0)))
        return far, dist, parent

    u, _, _ = farthest(0)
    v, _, parent = farthest(u)
    path = [v]
    while path[-1] != u:
        path.append(int(parent[path[-1]]))
    path_idx = np.asarray(path[::-1], dtype=int)

    on_path = np.zeros(n, dtype=bool)
    on_path[path_idx] = True
    off = np.nonzero(~on_path)[0]
    order: list[int] = []
    if off.size:
        d = np.linalg.norm(pts[off][:, None, :] - pts[path_idx][None, :, :], axis=2)
        nearest = np.argmin(d, axis=1)
        buckets: dict[int, list[tuple[float, int]]] = {}
        for k, o in enumerate(off):
            buckets.setdefault(int(nearest[k]), []).append((float(d[k, nearest[k]]), int(o)))
        for pos, p in enumerate(path_idx):
            order.append(int(p))
            for _, o in sorted(buckets.get(pos, [])):
                order.append(o)
    else:
        order = [int(p) for p in path_idx]
    return pts[order]


def consolidate(points: np.ndarray, *, cluster_id: int, sub_index: int,
                mean_width: float,
                source_stroke_ids: tuple[int, ...]) -> ConsolidatedCurve:
    """Fit one four-control-point cubic through an ordered sub-cluster.

    Fewer than 4 points degrade to the straight segment between the two
    extreme points, encoded as a degenerate cubic.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 4:
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        i, j = np.unravel_index(np.argmax(d), d.shape)
        if i > j:
            i, j = j, i
        cp = fit_cubic_bezier(np.array([pts[i], pts[j]]))
    else:
        ordered = _order_along_tree(pts)
        cp = fit_cubic_bezier(ordered)
    return ConsolidatedCurve(
        control_points=cp, source_cluster_id=cluster_id, sub_index=sub_index,
        mean_width=float(mean_width), source_stroke_ids=source_stroke_ids,
    )


def max_residual(curve: ConsolidatedCurve, points: np.ndarray,
                 dense: int = 512) -> float:
    """Largest distance from any source point to the curve."""
    samples = curve.evaluate(np.linspace(0.0, 1.0, dense))
    d, _ = cKDTree(samples).query(np.asarray(points, dtype=np.float64))
    return float(d.max())


def consolidate_clusters(preprocessed: list[PreprocessedStroke],
                         clustering: Clustering,
                         ratio_threshold: float = BIFURCATION_RATIO,
                         ) -> list[ConsolidatedCurve]:
    """Thin each cluster's pooled samples, split at bifurcations, and fit
    one consolidated curve per split piece."""
    curves: list[ConsolidatedCurve] = []
    for cid in sorted(set(int(c) for c in clustering.labels)):
        member_idx = [i for i, c in enumerate(clustering.labels) if c == cid]
        members = [preprocessed[i] for i in member_idx]
        pool = np.vstack([m.points for m in members])
        widths = np.array([m.width for m in members])
        mean_width = float(widths.mean())
        stroke_ids = tuple(m.stroke_id for m in members)
        if pool.shape[0] >= 4:
            thinned = thin_cluster(pool, mean_width)
        else:
            thinned = pool
        pieces = detect_and_split(thinned, ratio_threshold)
        for k, piece in enumerate(pieces):
            if piece.shape[0] < 2:
                continue
            curves.append(consolidate(
                piece, cluster_id=cid, sub_index=k,
                mean_width=mean_width, source_stroke_ids=stroke_ids))
    return curves
