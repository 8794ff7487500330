"""From-scratch tree-ensemble classifiers and the ablation harness.

Two binary estimators over the feature matrix: a bagged random forest
with Gini splits, and a gradient-boosted variant (logistic loss,
shrinkage 0.1, depth-limited regression trees). Training rows are
canonicalized by lexicographic sort first, so results are invariant to
input row order; per-tree randomness comes from counter-derived seeds.

Split thresholds are training values themselves (route: x <= threshold),
which keeps predictions invariant under any strictly monotone transform
applied consistently to a feature column at train and test time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientData, SchemaMismatch
from .features import FEATURE_NAMES, SUBSET_MASKS, FeatureMatrix
from .stats import ScaleParams, robust_scale

MODEL_FORMAT_VERSION = 1

DEFAULT_GRID = {
    "n_trees": [50, 100, 200],
    "max_depth": [4, 8, None],
    "min_samples_leaf": [1, 5],
}


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: str | int = "sqrt"

    def resolve_features(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(round(np.sqrt(n_features))))
        return min(int(self.features_per_split), n_features)

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class TreeNode:
    """Either an internal split (feature, threshold, children) or a leaf
    carrying the two class counts."""

    feature_index: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    class_counts: tuple[int, int] | None = None   # leaves only
    value: float | None = None                    # regression leaves

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            d = {}
            if self.class_counts is not None:
                d["counts"] = list(self.class_counts)
            if self.value is not None:
                d["value"] = self.value
            return d
        return {
            "feature": self.feature_index,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            counts = tuple(d["counts"]) if "counts" in d else None
            return cls(class_counts=counts, value=d.get("value"))
        return cls(
            feature_index=int(d["feature"]), threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]),
        )


def _best_split(x_node: np.ndarray, target: np.ndarray, feat_order: np.ndarray,
                min_leaf: int, mode: str) -> tuple[int, float] | None:
    """Lowest-impurity (feature, threshold) over the candidate features.

    mode "gini" treats target as 0/1 labels; mode "var" minimizes the
    weighted child variance of a real-valued target. Ties keep the
    earliest candidate feature and the lowest split position.
    """
    n = target.shape[0]
    best_score = np.inf
    best: tuple[int, float] | None = None
    for f in feat_order:
        order = np.argsort(x_node[:, f], kind="stable")
        xs = x_node[order, f]
        ts = target[order]
        valid = xs[:-1] < xs[1:]
        pos = np.arange(1, n)
        sizes_ok = (pos >= min_leaf) & ((n - pos) >= min_leaf)
        cand = np.nonzero(valid & sizes_ok)[0]
        if cand.size == 0:
            continue
        csum = np.cumsum(ts)
        nl = (cand + 1).astype(np.float64)
        nr = n - nl
        sl = csum[cand]
        sr = csum[-1] - sl
        if mode == "gini":
            pl = sl / nl
            pr = sr / nr
            score = (nl * (2 * pl * (1 - pl)) + nr * (2 * pr * (1 - pr))) / n
        else:
            csum2 = np.cumsum(ts * ts)
            sl2 = csum2[cand]
            sr2 = csum2[-1] - sl2
            score = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
        k = int(np.argmin(score))
        if float(score[k]) < best_score - 1e-15:
            best_score = float(score[k])
            best = (int(f), float(xs[cand[k]]))
    return best


def _build_tree(x: np.ndarray, target: np.ndarray, rng: np.random.Generator,
                hp: Hyperparams, mode: str, depth: int = 0,
                hessian: np.ndarray | None = None) -> TreeNode:
    n = target.shape[0]

    def leaf() -> TreeNode:
        if mode == "gini":
            ones = int(np.count_nonzero(target))
            return TreeNode(class_counts=(n - ones, ones))
        h = float(hessian.sum()) if hessian is not None else float(n)
        value = float(target.sum()) / h if h > 0 else 0.0
        return TreeNode(value=value)

    depth_ok = hp.max_depth is None or depth < hp.max_depth
    if not depth_ok or n < 2 * hp.min_samples_leaf or n < 2:
        return leaf()
    if mode == "gini" and (target == target[0]).all():
        return leaf()

    k = hp.resolve_features(x.shape[1])
    feat_order = rng.choice(x.shape[1], size=k, replace=False)
    split = _best_split(x, target, feat_order, hp.min_samples_leaf, mode)
    if split is None:
        return leaf()
    f, thr = split
    go_left = x[:, f] <= thr
    node = TreeNode(feature_index=f, threshold=thr)
    node.left = _build_tree(x[go_left], target[go_left], rng, hp, mode,
                            depth + 1,
                            hessian[go_left] if hessian is not None else None)
    node.right = _build_tree(x[~go_left], target[~go_left], rng, hp, mode,
                             depth + 1,
                             hessian[~go_left] if hessian is not None else None)
    return node


def _tree_apply(node: TreeNode, x: np.ndarray, out: np.ndarray,
                rows: np.ndarray) -> None:
    if node.is_leaf:
        if node.class_counts is not None:
            c0, c1 = node.class_counts
            out[rows] = 1.0 if c1 > c0 else (0.0 if c0 > c1 else 0.5)
        else:
            out[rows] = node.value
        return
    mask = x[rows, node.feature_index] <= node.threshold
    _tree_apply(node.left, x, out, rows[mask])
    _tree_apply(node.right, x, out, rows[~mask])


def tree_predict(node: TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[0])
    _tree_apply(node, x, out, np.arange(x.shape[0]))
    return out


@dataclass
class ForestModel:
    """A trained ensemble plus everything needed to reproduce inference."""

    kind: str                       # "rf" or "xgbrf"
    trees: list[TreeNode]
    subset_name: str
    subset_indices: np.ndarray
    scaling: ScaleParams
    hyperparams: Hyperparams
    seed: int
    base_score: float = 0.0         # boosted prior (log-odds)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "subset": self.subset_name,
            "subset_indices": self.subset_indices.tolist(),
            "scaling": self.scaling.to_dict(),
            "hyperparams": self.hyperparams.to_dict(),
            "seed": self.seed,
            "base_score": self.base_score,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise SchemaMismatch("unsupported model format version")
        return cls(
            kind=d["kind"],
            trees=[TreeNode.from_dict(t) for t in d["trees"]],
            subset_name=d["subset"],
            subset_indices=np.asarray(d["subset_indices"], dtype=int),
            scaling=ScaleParams.from_dict(d["scaling"]),
            hyperparams=Hyperparams.from_dict(d["hyperparams"]),
            seed=int(d["seed"]),
            base_score=float(d.get("base_score", 0.0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ForestModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _usable_rows(matrix: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Drop noise (-1) and unlabeled rows; return (values, labels)."""
    if matrix.labels is None:
        raise InsufficientData("labeled matrix required")
    keep = (matrix.labels == 0) | (matrix.labels == 1)
    return matrix.values[keep], matrix.labels[keep].astype(int)


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = [y.astype(np.float64)] + [x[:, j] for j in range(x.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _resolve_subset(subset) -> tuple[str, np.ndarray]:
    if isinstance(subset, str):
        return subset, np.nonzero(SUBSET_MASKS[subset])[0]
    return "custom", np.asarray(subset, dtype=int)


def train_forest(matrix: FeatureMatrix, hyperparams: Hyperparams | None = None,
                 seed: int = 0, subset="geo_or_sty",
                 kind: str = "rf") -> ForestModel:
    """Train an ensemble on the labeled matrix (noise rows dropped).

    Features are robust-scaled (the parameters ride along in the model),
    restricted to the named subset (or explicit column indices), and rows
    canonicalized so training is independent of input order.
    """
    hp = hyperparams or Hyperparams()
    values, labels = _usable_rows(matrix)
    if np.count_nonzero(labels == 1) < 2 or np.count_nonzero(labels == 0) < 2:
        raise InsufficientData("need at least 2 rows of each class")
    scaled, scaling = robust_scale(values)
    subset_name, subset_idx = _resolve_subset(subset)
    x = scaled[:, subset_idx]
    order = _canonical_order(x, labels)
    x, y = x[order], labels[order]

    trees: list[TreeNode] = []
    if kind == "rf":
        for t in range(hp.n_trees):
            rng = np.random.default_rng([seed, t])
            boot = rng.integers(0, x.shape[0], size=x.shape[0])
            trees.append(_build_tree(x[boot], y[boot], rng, hp, "gini"))
        base = 0.0
    elif kind == "xgbrf":
        prior = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        base = float(np.log(prior / (1 - prior)))
        scores = np.full(x.shape[0], base)
        shrinkage = 0.1
        for t in range(hp.n_trees):
            rng = np.random.default_rng([seed, t])
            p = 1.0 / (1.0 + np.exp(-scores))
            residual = y - p
            hess = p * (1 - p)
            tree = _build_tree(x, residual, rng, hp, "var", hessian=hess)
            scores = scores + shrinkage * tree_predict(tree, x)
            trees.append(tree)
    else:
        raise SchemaMismatch(f"unknown model kind {kind!r}")
    return ForestModel(kind=kind, trees=trees, subset_name=subset_name,
                       subset_indices=subset_idx, scaling=scaling,
                       hyperparams=hp, seed=seed, base_score=base)


def predict(model: ForestModel, matrix: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and the class-1 vote fraction per row.

    Rows are scaled with the model's stored parameters. Vote ties go to
    class 1 (Shape).
    """
    if matrix.values.shape[1] != len(FEATURE_NAMES):
        raise SchemaMismatch(
            f"expected {len(FEATURE_NAMES)} features, "
            f"got {matrix.values.shape[1]}")
    x = model.scaling.apply(matrix.values)[:, model.subset_indices]
    if model.kind == "rf":
        votes = np.zeros(x.shape[0])
        for tree in model.trees:
            votes += tree_predict(tree, x)
        frac1 = votes / len(model.trees)
    else:
        scores = np.full(x.shape[0], model.base_score)
        for tree in model.trees:
            scores = scores + 0.1 * tree_predict(tree, x)
        frac1 = 1.0 / (1.0 + np.exp(-scores))
    labels = (frac1 >= 0.5).astype(int)
    return labels, frac1


@dataclass(frozen=True)
class CVEntry:
    hyperparams: Hyperparams
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float


def _stratified_folds(y: np.ndarray, folds: int) -> np.ndarray:
    """Round-robin fold ids per class over canonical order."""
    assignment = np.zeros(y.shape[0], dtype=int)
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        if idx.size < folds:
            raise InsufficientData(
                f"class {cls} has {idx.size} rows, cannot stratify "
                f"into {folds} folds")
        assignment[idx] = np.arange(idx.size) % folds
    return assignment


def grid_search_cv(matrix: FeatureMatrix, grid: dict | None = None,
                   folds: int = 5, seed: int = 0,
                   subset: str = "geo_or_sty",
                   kind: str = "rf") -> tuple[ForestModel, list[CVEntry]]:
    """Exhaustive grid search by stratified k-fold validation accuracy.

    Ties prefer fewer trees, then shallower depth, then larger leaves;
    the winner is refit on the full training matrix.
    """
    if folds < 2:
        raise InsufficientData("need at least 2 folds")
    grid = grid or DEFAULT_GRID
    values, labels = _usable_rows(matrix)
    order = _canonical_order(values, labels)
    values, labels = values[order], labels[order]
    fold_of = _stratified_folds(labels, folds)

    combos = [
        Hyperparams(n_trees=nt, max_depth=md, min_samples_leaf=ml)
        for nt in grid["n_trees"]
        for md in grid["max_depth"]
        for ml in grid["min_samples_leaf"]
    ]
    entries: list[CVEntry] = []
    for hp in combos:
        accs = []
        for f in range(folds):
            train = FeatureMatrix(values=values[fold_of != f],
                                  labels=labels[fold_of != f])
            val = FeatureMatrix(values=values[fold_of == f],
                                labels=labels[fold_of == f])
            model = train_forest(train, hp, seed=seed, subset=subset, kind=kind)
            pred, _ = predict(model, val)
            accs.append(float(np.mean(pred == val.labels)))
        entries.append(CVEntry(hp, tuple(accs), float(np.mean(accs))))

    def sort_key(e: CVEntry):
        depth = e.hyperparams.max_depth
        return (-e.mean_accuracy, e.hyperparams.n_trees,
                np.inf if depth is None else depth,
                e.hyperparams.min_samples_leaf)

    best = min(entries, key=sort_key)
    final = train_forest(FeatureMatrix(values=values, labels=labels),
                         best.hyperparams, seed=seed, subset=subset, kind=kind)
    return final, entries


@dataclass(frozen=True)
class AblationRow:
    model: str
    subset: str
    split: str        # "train" or "test"
    accuracy: float   # percentages in [0, 100]
    precision: float
    recall: float


@dataclass(frozen=True)
class AblationResult:
    rows: tuple[AblationRow, ...]

    def get(self, model: str, subset: str, split: str) -> AblationRow:
        for r in self.rows:
            if (r.model, r.subset, r.split) == (model, subset, split):
                return r
        raise KeyError((model, subset, split))

    def to_dicts(self) -> list[dict]:
        return [r.__dict__ for r in self.rows]

    def to_text(self) -> str:
        lines = [f"{'Model':<8} {'Set':<12} {'Split':<6} "
                 f"{'Accuracy':>9} {'Precision':>10} {'Recall':>8}",
                 "-" * 58]
        for r in self.rows:
            lines.append(f"{r.model:<8} {r.subset:<12} {r.split:<6} "
                         f"{r.accuracy:>9.2f} {r.precision:>10.2f} "
                         f"{r.recall:>8.2f}")
        return "\n".join(lines)


def _metrics(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    acc = float(np.mean(pred == truth)) * 100.0
    tp = int(np.count_nonzero((pred == 1) & (truth == 1)))
    fp = int(np.count_nonzero((pred == 1) & (truth == 0)))
    fn = int(np.count_nonzero((pred == 0) & (truth == 1)))
    prec = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    rec = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    return acc, prec, rec


def train_test_split(matrix: FeatureMatrix, test_fraction: float = 0.2,
                     ) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Deterministic stratified split over canonical row order."""
    values, labels = _usable_rows(matrix)
    order = _canonical_order(values, labels)
    values, labels = values[order], labels[order]
    period = max(2, int(round(1.0 / test_fraction)))
    test_mask = np.zeros(labels.shape[0], dtype=bool)
    for cls in (0, 1):
        idx = np.nonzero(labels == cls)[0]
        test_mask[idx[::period]] = True
    train = FeatureMatrix(values=values[~test_mask], labels=labels[~test_mask])
    test = FeatureMatrix(values=values[test_mask], labels=labels[test_mask])
    return train, test


def ablation_run(matrix: FeatureMatrix, subsets=("geo", "sty", "geo_or_sty",
                                                 "geo_and_sty"),
                 models=("rf", "xgbrf"), grid: dict | None = None,
                 folds: int = 5, seed: int = 0) -> AblationResult:
    """Train each (model, subset) pair via grid search on a fixed 80/20
    stratified split and report train/test accuracy, precision, recall."""
    train, test = train_test_split(matrix)
    rows: list[AblationRow] = []
    for kind in models:
        for subset in subsets:
            model, _ = grid_search_cv(train, grid=grid, folds=folds,
                                      seed=seed, subset=subset, kind=kind)
            for split, part in (("train", train), ("test", test)):
                pred, _ = predict(model, part)
                acc, prec, rec = _metrics(pred, part.labels)
                rows.append(AblationRow(kind, subset, split, acc, prec, rec))
    return AblationResult(rows=tuple(rows))
