"""Distil a decision tree into a level-conditioned split network.

The teacher is a CART tree fitted to random-forest pseudo-labels. The student
sees (x, level) and predicts the teacher's left/right decision there; at
inference it drives the teacher's topology without reading any threshold.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset
from .metrics import classification_report
from .nn import AdamState, Mlp, adam_step, mlp_init, split_model_spec
from .rng import stream
from .tree.cart import Decision, DecisionTree, fit_tree, tree_decisions
from .tree.forest import Forest, fit_forest


class DistillError(ValueError):
    pass


@dataclass(frozen=True)
class DsmConfig:
    oracle_trees: int = 100
    oracle_depth: int = 15
    teacher_depth: int = 15
    steps: int = 30000
    batch: int = 256
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("oracle_trees", "oracle_depth", "teacher_depth", "steps", "batch"):
            if getattr(self, name) < 1:
                raise DistillError(f"{name} must be positive")
        if self.lr <= 0:
            raise DistillError("lr must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SplitModel:
    net: Mlp
    levels: int
    loss_history: list[float] = field(default_factory=list)

    def logits(self, X, levels) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        lv = np.broadcast_to(np.asarray(levels, dtype=np.int64), (X.shape[0],))
        return self.net(X, [lv])

    def decide(self, X, levels) -> np.ndarray:
        """1 (Right) only when the right logit is strictly larger; ties go Left."""
        z = self.logits(X, levels)
        return (z[:, 1] > z[:, 0]).astype(np.int64)


def make_teacher(ds: Dataset, cfg: DsmConfig = DsmConfig()) -> tuple[Forest, DecisionTree]:
    oracle = fit_forest(ds, cfg.oracle_trees, cfg.oracle_depth, cfg.seed)
    pseudo = ds.with_labels(oracle.predict(ds.features))
    return oracle, fit_tree(pseudo, cfg.teacher_depth)


def masked_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows whose target is not Exhausted, plus its logit gradient."""
    keep = targets != int(Decision.EXHAUSTED)
    grad = np.zeros_like(logits)
    m = int(keep.sum())
    if m == 0:
        return 0.0, grad
    z = logits[keep]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    t = targets[keep]
    loss = -float(np.mean(logp[np.arange(m), t]))
    g = np.exp(logp)
    g[np.arange(m), t] -= 1.0
    grad[keep] = g / m
    return loss, grad


def train_split_model(ds: Dataset, teacher: DecisionTree, cfg: DsmConfig = DsmConfig()) -> SplitModel:
    D = teacher.max_depth
    if D < 1:
        raise DistillError("teacher max_depth must be >= 1")
    X = ds.features
    n = X.shape[0]
    net = mlp_init(split_model_spec(ds.n_features, D), cfg.seed)
    model = SplitModel(net, D)
    rng = stream(cfg.seed, "train_split_model")
    state = AdamState(lr=cfg.lr)
    b = min(cfg.batch, n)
    for step in range(cfg.steps):
        rows = rng.choice(n, size=b, replace=False)
        levels = rng.integers(0, D, size=b)
        target = tree_decisions(teacher, X[rows], levels)
        if np.all(target == int(Decision.EXHAUSTED)):
            model.loss_history.append(0.0)
            continue
        out, cache = net.forward(X[rows], [levels], "train")
        loss, grad = masked_cross_entropy(out, target)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite split-model loss at step {step}")
        adam_step(net, net.backward(cache, grad), state)
        model.loss_history.append(loss)
    return model


Policy = Callable[[np.ndarray, np.ndarray], np.ndarray]


def traverse(policy: Policy, teacher: DecisionTree, X) -> np.ndarray:
    """Walk the teacher's topology using ``policy(rows, level) -> 0/1``; returns [n, D+1] node ids."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    path = np.empty((n, teacher.max_depth + 1), dtype=np.int64)
    path[:, 0] = 0
    for j in range(teacher.max_depth):
        live = np.flatnonzero(teacher.left[node] >= 0)
        if live.size:
            go = np.asarray(policy(X[live], np.full(live.size, j)))
            node[live] = np.where(go == 1, teacher.right[node[live]], teacher.left[node[live]])
        path[:, j + 1] = node
    return path


def infer(model: SplitModel | Policy, teacher: DecisionTree, X) -> np.ndarray:
    """Class id at the node where traversal stops (a leaf, or an internal node if depth runs out)."""
    policy = model.decide if isinstance(model, SplitModel) else model
    return teacher.prediction[traverse(policy, teacher, X)[:, -1]]


def path_agreement(model: SplitModel | Policy, teacher: DecisionTree, ds: Dataset | np.ndarray) -> float:
    X = ds.features if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    policy = model.decide if isinstance(model, SplitModel) else model
    return float(np.mean(np.all(traverse(policy, teacher, X) == teacher.paths(X), axis=1)))


def oracle_policy(teacher: DecisionTree) -> Policy:
    """The teacher's own decisions as a policy (Exhausted never reaches a live node)."""
    return lambda X, levels: tree_decisions(teacher, X, levels)


def distill_report(model: SplitModel, teacher: DecisionTree, test: Dataset, steps: int, seed: int) -> dict:
    t_pred = teacher.predict(test.features)
    s_pred = infer(model, teacher, test.features)
    k = test.class_count
    tr = classification_report(test.labels, t_pred, k)
    sr = classification_report(test.labels, s_pred, k)
    keys = {"acc": "accuracy", "f1": "macro_f1", "kappa": "cohen_kappa"}
    return {
        "teacher": {k2: getattr(tr, v) for k2, v in keys.items()},
        "student": {k2: getattr(sr, v) for k2, v in keys.items()},
        "gap": sr.accuracy - tr.accuracy,
        "path_agreement": path_agreement(model, teacher, test),
        "steps": steps,
        "seed": seed,
    }
