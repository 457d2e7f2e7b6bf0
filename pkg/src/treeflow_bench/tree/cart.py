"""CART classification and regression trees.

Nodes are stored in breadth-first order (id 0 is the root), and every
traversal goes left iff ``x[feature] <= threshold``.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .. import kernels
from ..data import Dataset


class TreeError(ValueError):
    pass


class Decision(enum.IntEnum):
    LEFT = 0
    RIGHT = 1
    EXHAUSTED = -1


@dataclass(frozen=True)
class TreeNode:
    id: int
    depth: int
    feature: int | None
    threshold: float | None
    left: int | None
    right: int | None
    class_counts: tuple[int, ...]
    prediction: int

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


class DecisionTree:
    """Fitted classification tree. Immutable after construction."""

    def __init__(self, nodes: list[TreeNode], max_depth: int, class_count: int, feature_count: int):
        self.nodes = tuple(nodes)
        self.max_depth = int(max_depth)
        self.class_count = int(class_count)
        self.feature_count = int(feature_count)
        n = len(self.nodes)
        self.feature = np.full(n, -1, dtype=np.int64)
        self.threshold = np.zeros(n)
        self.left = np.full(n, -1, dtype=np.int64)
        self.right = np.full(n, -1, dtype=np.int64)
        self.depth = np.zeros(n, dtype=np.int64)
        self.counts = np.zeros((n, self.class_count), dtype=np.int64)
        self.prediction = np.zeros(n, dtype=np.int64)
        for node in self.nodes:
            i = node.id
            if node.feature is not None:
                self.feature[i] = node.feature
                self.threshold[i] = node.threshold
                self.left[i] = node.left
                self.right[i] = node.right
            self.depth[i] = node.depth
            self.counts[i] = node.class_counts
            self.prediction[i] = node.prediction
        for a in (self.feature, self.threshold, self.left, self.right, self.depth,
                  self.counts, self.prediction):
            a.setflags(write=False)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def leaf_ids(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    @property
    def actual_depth(self) -> int:
        return int(self.depth.max())

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.feature_count:
            raise TreeError(f"expected {self.feature_count} features, got {X.shape[1]}")
        return X

    def paths(self, X) -> np.ndarray:
        """Node id occupied at each depth 0..max_depth for every row."""
        X = self._check(X)
        return kernels.descend_paths(X, self.feature, self.threshold, self.left, self.right,
                                     max(self.max_depth, self.actual_depth))

    def apply(self, X) -> np.ndarray:
        """Leaf id reached by every row."""
        X = self._check(X)
        return kernels.apply_leaves(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.prediction[self.apply(X)]

    def predict_proba(self, X) -> np.ndarray:
        c = self.counts[self.apply(X)].astype(np.float64)
        return c / c.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "depth": n.depth,
                    "feature": n.feature,
                    "threshold": n.threshold,
                    "left": n.left,
                    "right": n.right,
                    "counts": list(n.class_counts),
                    "prediction": n.prediction,
                }
                for n in self.nodes
            ],
            "max_depth": self.max_depth,
            "class_count": self.class_count,
            "feature_count": self.feature_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "DecisionTree":
        nodes = [
            TreeNode(n["id"], n["depth"], n["feature"], n["threshold"], n["left"], n["right"],
                     tuple(n["counts"]), n["prediction"])
            for n in doc["nodes"]
        ]
        return cls(nodes, doc["max_depth"], doc["class_count"], doc["feature_count"])

    @classmethod
    def from_json(cls, text: str) -> "DecisionTree":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        return isinstance(other, DecisionTree) and self.to_dict() == other.to_dict()


def _majority(counts: np.ndarray) -> int:
    return int(np.argmax(counts))  # first maximum -> lowest class id


def fit_tree(ds: Dataset, max_depth: int, min_samples_split: int = 2, *,
             max_features: int | None = None, rng: np.random.Generator | None = None,
             sample_index: np.ndarray | None = None) -> DecisionTree:
    """Greedy Gini CART.

    Nodes split while they are impure, shallower than ``max_depth``, hold at
    least ``min_samples_split`` rows and some candidate feature has two
    distinct values. Zero-gain splits are accepted (XOR needs them).
    ``max_features`` draws that many features per split from ``rng``.
    """
    if max_depth < 0:
        raise TreeError("max_depth must be >= 0")
    if min_samples_split < 2:
        raise TreeError("min_samples_split must be >= 2")
    X, y, k = ds.features, ds.labels, ds.class_count
    d = X.shape[1]
    if max_features is not None and rng is None:
        raise TreeError("max_features needs an rng")
    root = np.arange(ds.n_samples, dtype=np.int64) if sample_index is None else \
        np.ascontiguousarray(sample_index, dtype=np.int64)
    if len(root) == 0:
        raise TreeError("cannot fit a tree on an empty dataset")
    all_features = list(range(d))

    nodes: list[dict] = []
    queue = deque()
    nodes.append({"depth": 0})
    queue.append((0, root))
    while queue:
        nid, idx = queue.popleft()
        spec = nodes[nid]
        counts = np.bincount(y[idx], minlength=k)
        spec["counts"] = tuple(int(c) for c in counts)
        spec["prediction"] = _majority(counts)
        spec["split"] = None
        depth = spec["depth"]
        if depth >= max_depth or len(idx) < min_samples_split or np.count_nonzero(counts) <= 1:
            continue
        if max_features is None or max_features >= d:
            feats = all_features
        else:
            feats = sorted(int(f) for f in rng.choice(d, size=max_features, replace=False))
        f, thr, _ = kernels.best_split_gini(X, y, idx, feats, k)
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        li, ri = len(nodes), len(nodes) + 1
        nodes.append({"depth": depth + 1})
        nodes.append({"depth": depth + 1})
        spec["split"] = (f, thr, li, ri)
        queue.append((li, idx[go_left]))
        queue.append((ri, idx[~go_left]))

    out = []
    for i, s in enumerate(nodes):
        f, thr, li, ri = s["split"] if s["split"] else (None, None, None, None)
        out.append(TreeNode(i, s["depth"], f, None if thr is None else float(thr), li, ri,
                            s["counts"], s["prediction"]))
    return DecisionTree(out, max_depth, k, d)


def predict(tree: DecisionTree, x) -> tuple[int, np.ndarray]:
    """Class id and normalized class distribution for one input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) != tree.feature_count:
        raise TreeError(f"expected a vector of {tree.feature_count} features")
    leaf = int(tree.apply(x[None, :])[0])
    c = tree.counts[leaf].astype(np.float64)
    return int(tree.prediction[leaf]), c / c.sum()


def tree_decisions(tree: DecisionTree, X, levels) -> np.ndarray:
    """Vectorized per-row decisions (0 left, 1 right, -1 exhausted) at the given levels."""
    levels = np.broadcast_to(np.asarray(levels, dtype=np.int64), (np.atleast_2d(X).shape[0],))
    if np.any(levels < 0) or np.any(levels >= tree.max_depth):
        raise TreeError(f"level must lie in [0, {tree.max_depth})")
    P = tree.paths(X)
    rows = np.arange(P.shape[0])
    node = P[rows, levels]
    internal = tree.feature[node] >= 0
    nxt = P[rows, np.minimum(levels + 1, P.shape[1] - 1)]
    return np.where(internal, (nxt == tree.right[node]).astype(np.int64), int(Decision.EXHAUSTED))


def tree_decision(tree: DecisionTree, x, j: int) -> Decision:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) != tree.feature_count:
        raise TreeError(f"expected a vector of {tree.feature_count} features")
    return Decision(int(tree_decisions(tree, x[None, :], [j])[0]))


def encode_paths(tree: DecisionTree, X) -> np.ndarray:
    """Row-wise path encodings: 1/(depth+1) on every visited node, 0 elsewhere."""
    P = tree.paths(X)
    out = np.zeros((P.shape[0], tree.node_count))
    rows = np.repeat(np.arange(P.shape[0]), P.shape[1])
    ids = P.ravel()
    out[rows, ids] = 1.0 / (tree.depth[ids] + 1.0)
    return out


def encode_path(tree: DecisionTree, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) != tree.feature_count:
        raise TreeError(f"expected a vector of {tree.feature_count} features")
    return encode_paths(tree, x[None, :])[0]


def _entropy2(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    tot = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, tot, out=np.zeros_like(counts), where=tot > 0)
    logs = np.log2(p, out=np.zeros_like(p), where=p > 0)
    return -(p * logs).sum(axis=-1)


def level_entropy(tree: DecisionTree, ds: Dataset) -> np.ndarray:
    """Sample-weighted normalized class entropy of the nodes at each depth 0..max_depth."""
    if tree.class_count < 2:
        raise TreeError("level entropy needs at least two classes")
    if ds.n_samples < 1:
        raise TreeError("level entropy needs samples")
    P = tree.paths(ds.features)
    n, k = ds.n_samples, tree.class_count
    out = np.empty(tree.max_depth + 1)
    for d in range(tree.max_depth + 1):
        col = P[:, min(d, P.shape[1] - 1)]
        table = np.bincount(col * k + ds.labels, minlength=tree.node_count * k).reshape(-1, k)
        w = table.sum(axis=1) / n
        out[d] = float(np.dot(w, _entropy2(table))) / np.log2(k)
    return out


def node_members(tree: DecisionTree, X, node: int) -> np.ndarray:
    if not 0 <= node < tree.node_count:
        raise TreeError(f"no node {node}")
    P = tree.paths(X)
    return np.flatnonzero(P[:, tree.depth[node]] == node)


def node_prototype(tree: DecisionTree, ds: Dataset, node: int) -> np.ndarray:
    """Feature-wise mean of the training rows routed through ``node``."""
    rows = node_members(tree, ds.features, node)
    if len(rows) == 0:
        raise TreeError(f"node {node} receives no samples")
    return ds.features[rows].mean(axis=0)


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return kernels.apply_leaves(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


def fit_regression_tree(X, r, max_depth: int, min_samples_split: int = 2) -> RegressionTree:
    """Variance-reduction CART; leaf value is the mean target of the leaf."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    r = np.ascontiguousarray(r, dtype=np.float64)
    feats = list(range(X.shape[1]))
    scale = 1e-12 * (1.0 + float(np.max(np.abs(r))) if len(r) else 1.0)
    feature, threshold, left, right, value, depth = [], [], [], [], [], []

    def new(dpt):
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            lst.append(v)
        depth.append(dpt)
        return len(feature) - 1

    queue = deque([(new(0), np.arange(len(r), dtype=np.int64))])
    while queue:
        nid, idx = queue.popleft()
        vals = r[idx]
        value[nid] = float(vals.mean())
        if depth[nid] >= max_depth or len(idx) < min_samples_split or np.ptp(vals) <= scale:
            continue
        f, thr, _ = kernels.best_split_mse(X, r, idx, feats)
        if f < 0:
            continue
        go = X[idx, f] <= thr
        li, ri = new(depth[nid] + 1), new(depth[nid] + 1)
        feature[nid], threshold[nid], left[nid], right[nid] = f, thr, li, ri
        queue.append((li, idx[go]))
        queue.append((ri, idx[~go]))
    return RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                          np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                          np.array(value), np.array(depth, dtype=np.int64))


def path_node_sets(tree: DecisionTree, X) -> Iterable[tuple[int, ...]]:
    for row in tree.paths(X):
        yield tuple(dict.fromkeys(int(v) for v in row))
