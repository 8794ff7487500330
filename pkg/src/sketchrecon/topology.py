"""Topology recovery: connect consolidated curves into a curve network.

Close curve pairs are flagged for connection; approaches near a curve end
constrain that endpoint, interior approaches split the curve. Constraints
targeting mutually-near points form junction groups, each solved for a
single connecting point by quasi-Newton minimization of the summed
point-to-line distances (smoothed to stay differentiable at exact
intersections). Constrained curves are extended to their junction and
refit, and coincident endpoints merge into shared graph nodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .consolidate import ConsolidatedCurve
from .errors import DegenerateInput
from .splines import (bezier_eval, bezier_length, bezier_split,
                      bezier_tangent, fit_cubic_bezier)

CONNECT_COEFF = 1.5        # connection reach, times min pair ink width
END_WINDOW_FRACTION = 0.05  # of arc length; larger of this and the reach
NODE_MERGE_TOL = 1e-6
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


# --- pairwise curve distance -------------------------------------------------

def _sample_count(curve: ConsolidatedCurve) -> int:
    spacing = 0.5 * curve.mean_width
    return max(16, int(np.ceil(curve.length() / spacing)))


def _golden_refine(fun, lo: float, hi: float, iters: int = 40) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def curve_pair_distance(c_a: ConsolidatedCurve, c_b: ConsolidatedCurve) -> dict:
    """Minimum distance between two curves over parameter-space samples,
    sharpened by one golden-section pass around the discrete argmin."""
    na, nb = _sample_count(c_a), _sample_count(c_b)
    ta = np.linspace(0.0, 1.0, na)
    tb = np.linspace(0.0, 1.0, nb)
    pa = c_a.evaluate(ta)
    pb = c_b.evaluate(tb)
    d2 = np.sum((pa[:, None, :] - pb[None, :, :]) ** 2, axis=2)
    i, j = np.unravel_index(int(np.argmin(d2)), d2.shape)

    fixed_b = pb[j]
    lo, hi = ta[max(i - 1, 0)], ta[min(i + 1, na - 1)]
    u = _golden_refine(
        lambda t: float(np.sum((c_a.evaluate(t)[0] - fixed_b) ** 2)), lo, hi)
    point_a = c_a.evaluate(u)[0]
    lo, hi = tb[max(j - 1, 0)], tb[min(j + 1, nb - 1)]
    v = _golden_refine(
        lambda t: float(np.sum((c_b.evaluate(t)[0] - point_a) ** 2)), lo, hi)
    point_b = c_b.evaluate(v)[0]
    base = float(np.sqrt(d2[i, j]))
    refined = float(np.linalg.norm(point_a - point_b))
    if refined <= base:
        return {"d": refined, "point_a": point_a, "point_b": point_b,
                "param_a": float(u), "param_b": float(v)}
    return {"d": base, "point_a": pa[i], "point_b": pb[j],
            "param_a": float(ta[i]), "param_b": float(tb[j])}


# --- connection planning -----------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    """One curve end (or interior split point) bound to a junction."""

    curve_id: int
    kind: str            # "start", "end", or "split"
    param: float         # split parameter; 0.0 / 1.0 for ends
    anchor: np.ndarray   # approximate junction location

    def key(self) -> tuple:
        if self.kind == "split":
            return (self.curve_id, "split", round(self.param, 9))
        return (self.curve_id, self.kind)


@dataclass(frozen=True)
class PairFlag:
    curve_a: int
    curve_b: int
    distance: float
    action_a: Constraint
    action_b: Constraint


@dataclass
class ConnectionPlan:
    pairs: list[PairFlag]
    groups: list[list[Constraint]]


def _arc_position(curve: ConsolidatedCurve, param: float, dense: int = 128) -> tuple[float, float]:
    """(arc length from start to param, total arc length)."""
    t = np.linspace(0.0, 1.0, dense)
    pts = curve.evaluate(t)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return float(np.interp(param, t, cum)), float(cum[-1])


def _classify_side(curve: ConsolidatedCurve, curve_id: int, param: float,
                   point: np.ndarray, reach: float) -> Constraint:
    s, total = _arc_position(curve, param)
    window = max(reach, END_WINDOW_FRACTION * total)
    if s <= window:
        return Constraint(curve_id, "start", 0.0, curve.control_points[0])
    if total - s <= window:
        return Constraint(curve_id, "end", 1.0, curve.control_points[3])
    return Constraint(curve_id, "split", param, point)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def plan_connections(curves: list[ConsolidatedCurve],
                     coeff: float = CONNECT_COEFF) -> ConnectionPlan:
    """Flag curve pairs within reach, classify each side as an endpoint
    constraint or an interior split, and group constraints whose anchors
    are mutually near (transitive closure) into junctions."""
    if len(curves) < 2:
        return ConnectionPlan(pairs=[], groups=[])
    pairs: list[PairFlag] = []
    atoms: dict[tuple, Constraint] = {}
    links: list[tuple[tuple, tuple]] = []
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            reach = coeff * min(curves[i].mean_width, curves[j].mean_width)
            dd = curve_pair_distance(curves[i], curves[j])
            if dd["d"] >= reach:
                continue
            ca = _classify_side(curves[i], i, dd["param_a"], dd["point_a"], reach)
            cb = _classify_side(curves[j], j, dd["param_b"], dd["point_b"], reach)
            for c in (ca, cb):
                atoms.setdefault(c.key(), c)
            pairs.append(PairFlag(i, j, dd["d"], ca, cb))
            links.append((ca.key(), cb.key()))

    keys = sorted(atoms.keys())
    index = {k: n for n, k in enumerate(keys)}
    uf = _UnionFind(len(keys))
    for ka, kb in links:
        uf.union(index[ka], index[kb])
    # transitive closure over mutually-near anchors
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            ca, cb = atoms[keys[a]], atoms[keys[b]]
            reach = coeff * min(curves[ca.curve_id].mean_width,
                                curves[cb.curve_id].mean_width)
            if np.linalg.norm(ca.anchor - cb.anchor) < reach:
                uf.union(a, b)
    grouped: dict[int, list[Constraint]] = {}
    for k in keys:
        grouped.setdefault(uf.find(index[k]), []).append(atoms[k])
    groups = sorted(grouped.values(), key=lambda g: (-len(g),
                                                     g[0].curve_id,
                                                     g[0].kind))
    return ConnectionPlan(pairs=pairs, groups=groups)


# --- junction solving --------------------------------------------------------

@dataclass(frozen=True)
class JunctionResult:
    point: np.ndarray
    objective: float
    singular: bool


def junction_objective(p: np.ndarray, endpoints: np.ndarray,
                       tangents: np.ndarray, delta: float = 0.0) -> float:
    c = np.cross(p[None, :] - endpoints, tangents)
    norms = np.sqrt(np.einsum("ij,ij->i", c, c) + delta * delta)
    return float(np.sum(norms - delta))


def solve_junction(endpoints: np.ndarray, tangents: np.ndarray) -> JunctionResult:
    """Connecting point minimizing the sum of distances to the endpoint
    lines. Each term is smoothed as sqrt(|.|^2 + delta^2) - delta so the
    objective stays differentiable where lines intersect.

    A configuration of parallel tangents with endpoints collinear along
    them has no unique minimizer; the endpoint centroid is returned with
    the singular flag set.
    """
    pts = np.asarray(endpoints, dtype=np.float64).reshape(-1, 3)
    tans = np.asarray(tangents, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise DegenerateInput("junction needs at least 2 endpoint lines")
    tans = tans / np.linalg.norm(tans, axis=1)[:, None]
    extent = pts.max(axis=0) - pts.min(axis=0)
    scale = float(np.linalg.norm(extent))
    if scale == 0.0:
        scale = 1.0
    centroid = pts.mean(axis=0)

    parallel = np.all(np.linalg.norm(np.cross(tans, tans[0]), axis=1) < 1e-12)
    if parallel:
        offsets = np.cross(pts - pts[0], tans[0])
        if np.all(np.linalg.norm(offsets, axis=1) < 1e-9 * scale):
            return JunctionResult(point=centroid,
                                  objective=junction_objective(
                                      centroid, pts, tans),
                                  singular=True)

    delta = 1e-8 * scale

    def fun(p: np.ndarray) -> float:
        return junction_objective(p, pts, tans, delta)

    def grad(p: np.ndarray) -> np.ndarray:
        c = np.cross(p[None, :] - pts, tans)
        norms = np.sqrt(np.einsum("ij,ij->i", c, c) + delta * delta)
        return np.sum(np.cross(tans, c) / norms[:, None], axis=0)

    res = minimize(fun, centroid, jac=grad, method="BFGS",
                   options={"gtol": 1e-8 * scale, "maxiter": 200})
    point = np.asarray(res.x, dtype=np.float64)
    return JunctionResult(point=point,
                          objective=junction_objective(point, pts, tans),
                          singular=False)


# --- network assembly --------------------------------------------------------

@dataclass
class NetworkEdge:
    edge_id: int
    node_a: int
    node_b: int
    control_points: np.ndarray   # (4, 3)
    width: float
    source_curve: int

    def evaluate(self, t) -> np.ndarray:
        return bezier_eval(self.control_points, t)

    def length(self) -> float:
        return bezier_length(self.control_points)


@dataclass
class CurveNetwork:
    nodes: np.ndarray            # (n, 3)
    edges: list[NetworkEdge]
    warnings: list[str] = field(default_factory=list)

    def adjacency(self) -> dict[int, list[tuple[int, int]]]:
        """node id -> list of (edge id, opposite node id)."""
        adj: dict[int, list[tuple[int, int]]] = {
            i: [] for i in range(self.nodes.shape[0])}
        for e in self.edges:
            adj[e.node_a].append((e.edge_id, e.node_b))
            adj[e.node_b].append((e.edge_id, e.node_a))
        return adj

    def degree(self, node: int) -> int:
        return len(self.adjacency()[node])

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": i, "p": self.nodes[i].tolist()}
                      for i in range(self.nodes.shape[0])],
            "edges": [{"id": e.edge_id, "node_a": e.node_a, "node_b": e.node_b,
                       "control_points": e.control_points.tolist(),
                       "width": e.width, "source_curve": e.source_curve}
                      for e in self.edges],
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurveNetwork":
        nodes = np.array([n["p"] for n in d["nodes"]], dtype=np.float64)
        edges = [NetworkEdge(
            edge_id=int(e["id"]), node_a=int(e["node_a"]),
            node_b=int(e["node_b"]),
            control_points=np.asarray(e["control_points"], dtype=np.float64),
            width=float(e["width"]), source_curve=int(e.get("source_curve", -1)))
            for e in d["edges"]]
        return cls(nodes=nodes, edges=edges,
                   warnings=list(d.get("warnings", [])))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CurveNetwork":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class _Segment:
    source_curve: int
    control_points: np.ndarray
    width: float
    new_start: np.ndarray | None = None
    new_end: np.ndarray | None = None


def _extend_segment(seg: _Segment, dense: int = 33) -> np.ndarray:
    """Append solved junction points at constrained ends and refit."""
    if seg.new_start is None and seg.new_end is None:
        return seg.control_points
    pts = bezier_eval(seg.control_points, np.linspace(0.0, 1.0, dense))
    chunks = []
    if seg.new_start is not None:
        chunks.append(seg.new_start[None, :])
    chunks.append(pts)
    if seg.new_end is not None:
        chunks.append(seg.new_end[None, :])
    return fit_cubic_bezier(np.vstack(chunks))


def build_network(curves: list[ConsolidatedCurve],
                  plan: ConnectionPlan) -> CurveNetwork:
    """Apply splits, solve junction groups (largest first), extend the
    constrained curves to their junction points, and merge coincident
    endpoints into shared nodes."""
    warnings: list[str] = []
    splits: dict[int, list[float]] = {}
    for group in plan.groups:
        for c in group:
            if c.kind == "split":
                splits.setdefault(c.curve_id, []).append(c.param)

    # split curves into segments (exact de Casteljau subdivision)
    segments: list[_Segment] = []
    seg_lookup: dict[tuple, tuple[int, str]] = {}   # constraint key -> seg end
    for cid, curve in enumerate(curves):
        params = sorted(splits.get(cid, []))
        pieces = []
        rest = curve.control_points
        t0 = 0.0
        for p in params:
            local = (p - t0) / (1.0 - t0) if t0 < 1.0 else 0.0
            left, rest = bezier_split(rest, local)
            pieces.append(left)
            t0 = p
        pieces.append(rest)
        first = len(segments)
        for k, cp in enumerate(pieces):
            segments.append(_Segment(source_curve=cid, control_points=cp,
                                     width=curve.mean_width))
        seg_lookup[(cid, "start")] = (first, "start")
        seg_lookup[(cid, "end")] = (first + len(pieces) - 1, "end")
        for k, p in enumerate(params):
            seg_lookup[(cid, "split", round(p, 9))] = (first + k, "end")

    # solve each junction group and pin the member segment ends
    for group in plan.groups:
        ends: list[tuple[int, str]] = []
        for c in group:
            if c.kind == "split":
                si, _ = seg_lookup[(c.curve_id, "split", round(c.param, 9))]
                ends.append((si, "end"))
                ends.append((si + 1, "start"))
            else:
                ends.append(seg_lookup[(c.curve_id, c.kind)])
        pts, tans = [], []
        for si, which in ends:
            cp = segments[si].control_points
            t = 0.0 if which == "start" else 1.0
            pts.append(cp[0] if which == "start" else cp[3])
            tans.append(bezier_tangent(cp, t))
        result = solve_junction(np.asarray(pts), np.asarray(tans))
        if result.singular:
            warnings.append(
                f"junction of {len(ends)} ends is singular; "
                f"placed at endpoint centroid")
        for si, which in ends:
            if which == "start":
                segments[si].new_start = result.point
            else:
                segments[si].new_end = result.point

    # extend, collect endpoints, merge nodes
    final_cps = [_extend_segment(s) for s in segments]
    endpoints = []
    for cp in final_cps:
        endpoints.append(cp[0])
        endpoints.append(cp[3])
    endpoints = np.asarray(endpoints)
    uf = _UnionFind(endpoints.shape[0])
    from scipy.spatial import cKDTree
    tree = cKDTree(endpoints)
    for a, b in sorted(tree.query_pairs(NODE_MERGE_TOL)):
        uf.union(a, b)
    root_to_node: dict[int, int] = {}
    node_points: list[np.ndarray] = []
    node_of = np.zeros(endpoints.shape[0], dtype=int)
    for i in range(endpoints.shape[0]):
        r = uf.find(i)
        if r not in root_to_node:
            members = [j for j in range(endpoints.shape[0]) if uf.find(j) == r]
            root_to_node[r] = len(node_points)
            node_points.append(endpoints[members].mean(axis=0))
        node_of[i] = root_to_node[r]

    edges: list[NetworkEdge] = []
    for k, (seg, cp) in enumerate(zip(segments, final_cps)):
        na, nb = int(node_of[2 * k]), int(node_of[2 * k + 1])
        if na == nb and bezier_length(cp) < NODE_MERGE_TOL:
            warnings.append(f"dropped zero-length segment of curve "
                            f"{seg.source_curve}")
            continue
        cp = cp.copy()
        cp[0] = node_points[na]
        cp[3] = node_points[nb]
        edges.append(NetworkEdge(edge_id=len(edges), node_a=na, node_b=nb,
                                 control_points=cp, width=seg.width,
                                 source_curve=seg.source_curve))
    return CurveNetwork(nodes=np.asarray(node_points), edges=edges,
                        warnings=warnings)
