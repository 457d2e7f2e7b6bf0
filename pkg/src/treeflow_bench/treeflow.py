"""Conditional flow matching with decision-tree path conditioning."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, ScalerStats, write_csv
from .nn import AdamState, Mlp, adam_step, mlp_init, velocity_spec
from .rng import stream
from .tree.cart import DecisionTree, encode_paths, fit_tree


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class TreeFlowConfig:
    tree_depth: int = 10
    steps: int = 1000
    batch: int = 256
    lr: float = 1e-3
    weight_decay: float = 0.01
    euler_steps: int = 50
    seed: int = 0
    per_example_t: bool = False

    def __post_init__(self):
        for name in ("tree_depth", "steps", "batch", "euler_steps"):
            if getattr(self, name) < 1:
                raise FlowError(f"{name} must be positive")
        if self.lr <= 0 or self.weight_decay < 0:
            raise FlowError("lr must be positive and weight_decay non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VelocityModel:
    net: Mlp
    tree: DecisionTree
    cfg: TreeFlowConfig
    loss_history: list[float] = field(default_factory=list)
    t_history: list[np.ndarray] = field(default_factory=list)

    def velocity(self, x, t, p, y) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        tt = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1, 1), (x.shape[0], 1))
        return self.net(np.concatenate([x, tt, p], axis=1), [np.broadcast_to(y, (x.shape[0],))])


def interpolate(x_data, x_noise, t):
    """x_t = t x_data + (1 - t) x_noise and target v* = x_data - x_noise."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    return t * x_data + (1.0 - t) * x_noise, x_data - x_noise


def cfm_loss_batch(model: VelocityModel, batch: tuple, t, noise) -> float:
    """Mean over rows of ||v(x_t, t, p, y) - v*||^2 for batch = (x_data, p, y)."""
    x_data, p, y = batch
    xt, target = interpolate(x_data, noise, t)
    diff = model.velocity(xt, t, p, y) - target
    return float(np.mean(np.sum(diff * diff, axis=1)))


def train_treeflow(ds: Dataset, cfg: TreeFlowConfig = TreeFlowConfig(), single_class: bool = False
                   ) -> VelocityModel:
    """Fit the conditioning tree, then regress the velocity field with AdamW."""
    if ds.class_count < 2 and not single_class:
        raise FlowError("need at least two classes (pass single_class=True to override)")
    tree = fit_tree(ds, cfg.tree_depth)
    P = encode_paths(tree, ds.features)
    X, y = ds.features, ds.labels
    n, d = X.shape
    net = mlp_init(velocity_spec(d, tree.node_count, ds.class_count), cfg.seed)
    model = VelocityModel(net, tree, cfg)
    rng = stream(cfg.seed, "train_treeflow")
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    b = min(cfg.batch, n)
    for step in range(cfg.steps):
        rows = rng.choice(n, size=b, replace=False)
        noise = rng.standard_normal((b, d))
        t = rng.uniform(0.0, 1.0, size=b if cfg.per_example_t else 1)
        tt = np.broadcast_to(t, (b,))
        xt, target = interpolate(X[rows], noise, tt)
        out, cache = net.forward(np.concatenate([xt, tt[:, None], P[rows]], axis=1), [y[rows]], "train")
        diff = out - target
        loss = float(np.mean(np.sum(diff * diff, axis=1)))
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite flow-matching loss at step {step}")
        adam_step(net, net.backward(cache, 2.0 * diff / b), state)
        model.loss_history.append(loss)
        model.t_history.append(t)
    return model


def matching_rows(model: VelocityModel, ds: Dataset, y_target: int, partition: int | None = None
                  ) -> np.ndarray:
    mask = ds.labels == y_target
    if partition is not None:
        mask &= model.tree.apply(ds.features) == partition
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise FlowError(f"no training rows with label {y_target} and partition {partition}")
    return rows


def generate(model: VelocityModel, ds: Dataset, y_target: int, partition: int | None = None,
             n: int = 1, seed: int = 0, return_leaves: bool = False):
    """Euler-integrate the conditional flow from noise at t=0 to data at t=1.

    Each sample conditions on the path of a reference training row drawn
    uniformly from rows matching (y_target, partition).
    """
    rows = matching_rows(model, ds, y_target, partition)
    rng = stream(seed, f"generate:{y_target}:{partition}")
    ref = rows[rng.integers(0, rows.size, size=n)]
    p = encode_paths(model.tree, ds.features[ref])
    x = rng.standard_normal((n, ds.n_features))
    steps = model.cfg.euler_steps
    dt = 1.0 / steps
    y = np.full(n, y_target, dtype=np.int64)
    for k in range(steps):
        x = x + model.velocity(x, k * dt, p, y) * dt
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite generated sample")
    if return_leaves:
        return x, model.tree.apply(ds.features[ref])
    return x


def synthesize(model: VelocityModel, ds: Dataset, counts=None, seed: int = 0
               ) -> tuple[Dataset, np.ndarray]:
    """Generate a labelled set, ``counts[c]`` rows per class (default: training histogram)."""
    if counts is None:
        counts = np.bincount(ds.labels, minlength=ds.class_count)
    Xs, ys, leaves = [], [], []
    for c, m in enumerate(counts):
        if m == 0:
            continue
        x, leaf = generate(model, ds, c, None, int(m), seed, return_leaves=True)
        Xs.append(x)
        ys.append(np.full(int(m), c))
        leaves.append(leaf)
    syn = Dataset(np.concatenate(Xs), np.concatenate(ys), ds.feature_names, ds.class_count,
                  ds.label_names)
    return syn, np.concatenate(leaves)


def partition_fidelity(model: VelocityModel, ds: Dataset, y_target: int, partition: int,
                       n: int = 200, seed: int = 0) -> float:
    """Share of samples conditioned on a leaf's path that route back into that leaf."""
    x = generate(model, ds, y_target, partition, n, seed)
    return float(np.mean(model.tree.apply(x) == partition))


def export_csv(path, syn: Dataset, scaler: ScalerStats | None = None, leaves=None,
               label_column: str = "label") -> None:
    """Write synthetic rows in the input schema, de-standardized when a scaler is given."""
    X = syn.features if scaler is None else scaler.inverse(syn.features)
    names = syn.label_names
    labels = [names[c] if names else int(c) for c in syn.labels]
    extra = {label_column: labels}
    if leaves is not None:
        extra["__leaf"] = [int(v) for v in leaves]
    write_csv(path, X, syn.feature_names, extra)
