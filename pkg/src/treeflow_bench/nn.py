"""Dense networks with embeddings and normalization, explicit backprop, Adam/AdamW.

Parameters live in an ordered ``dict`` of arrays. Keys: ``W{l}``/``b{l}``
for linear layers, ``g{l}``/``s{l}`` for norm scale and shift, ``rm{l}``/``rv{l}``
for BatchNorm running statistics (buffers, never trained) and ``E{k}`` for
embedding tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .io import read_container, write_container
from .rng import stream

LN_EPS = 1e-5
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class NetError(ValueError):
    pass


@dataclass(frozen=True)
class Embedding:
    cardinality: int
    dim: int


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    activation: str = "relu"
    norm: str | None = None
    embeddings: tuple[Embedding, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "embeddings",
                           tuple(e if isinstance(e, Embedding) else Embedding(*e) for e in self.embeddings))
        if self.activation not in ("relu", "silu"):
            raise NetError(f"unknown activation {self.activation!r}")
        if self.norm not in (None, "layernorm", "batchnorm"):
            raise NetError(f"unknown norm {self.norm!r}")
        dims = [self.output_dim, *self.hidden] + [d for e in self.embeddings for d in (e.cardinality, e.dim)]
        if self.input_dim < 0 or any(d < 1 for d in dims) or self.in_width < 1:
            raise NetError(f"invalid layer sizes in {self}")

    @property
    def in_width(self) -> int:
        """Width of the first linear layer: continuous inputs plus embedding dims."""
        return self.input_dim + sum(e.dim for e in self.embeddings)

    @property
    def widths(self) -> list[int]:
        return [self.in_width, *self.hidden, self.output_dim]

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "norm": self.norm,
            "embeddings": [[e.cardinality, e.dim] for e in self.embeddings],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(d["input_dim"], tuple(d["hidden"]), d["output_dim"], d["activation"], d["norm"],
                   tuple(Embedding(*e) for e in d["embeddings"]))


def _is_buffer(name: str) -> bool:
    return name.startswith(("rm", "rv"))


@dataclass
class ForwardCache:
    mode: str
    version: int
    x: np.ndarray
    cats: list[np.ndarray]
    layers: list[dict]


class Mlp:
    """A network instance: spec plus parameter arrays."""

    def __init__(self, spec: MlpSpec, params: dict[str, np.ndarray]):
        self.spec = spec
        self.params = params
        self.version = 0

    @property
    def trainable(self) -> list[str]:
        return [k for k in self.params if not _is_buffer(k)]

    @property
    def dtype(self):
        return self.params["W0"].dtype

    def copy(self) -> "Mlp":
        return Mlp(self.spec, {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> "Mlp":
        return Mlp(self.spec, {k: v.astype(dtype) for k, v in self.params.items()})

    # -- forward ---------------------------------------------------------
    def _inputs(self, x, cats) -> tuple[np.ndarray, list[np.ndarray]]:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[:, None] if self.spec.input_dim == 1 else x[None, :]
        cats = [] if cats is None else [np.asarray(c, dtype=np.int64).reshape(-1) for c in cats]
        if x.shape[1] != self.spec.input_dim:
            raise NetError(f"expected {self.spec.input_dim} continuous inputs, got {x.shape[1]}")
        if len(cats) != len(self.spec.embeddings):
            raise NetError(f"expected {len(self.spec.embeddings)} categorical inputs, got {len(cats)}")
        if x.shape[0] < 1:
            raise NetError("batch must contain at least one row")
        for k, (c, e) in enumerate(zip(cats, self.spec.embeddings)):
            if c.shape[0] != x.shape[0]:
                raise NetError(f"categorical input {k} has {c.shape[0]} rows, expected {x.shape[0]}")
            if c.size and (c.min() < 0 or c.max() >= e.cardinality):
                raise NetError(f"categorical input {k} out of range [0, {e.cardinality})")
        return x, cats

    def forward(self, x, cats=None, mode: str = "eval", update_stats: bool = True
                ) -> tuple[np.ndarray, ForwardCache]:
        """Run the network. ``mode='train'`` uses batch statistics for BatchNorm."""
        if mode not in ("train", "eval"):
            raise NetError(f"unknown mode {mode!r}")
        x, cats = self._inputs(x, cats)
        p, spec = self.params, self.spec
        if mode == "train" and spec.norm == "batchnorm" and x.shape[0] < 2:
            raise NetError("train-mode BatchNorm needs a batch of at least 2 rows")
        a = np.concatenate([x] + [p[f"E{k}"][c] for k, c in enumerate(cats)], axis=1) if cats else x
        layers = []
        n_hidden = len(spec.hidden)
        for l in range(n_hidden + 1):
            rec = {"a": a}
            z = a @ p[f"W{l}"] + p[f"b{l}"]
            if l == n_hidden:
                layers.append(rec)
                a = z
                break
            if spec.norm == "layernorm":
                mu = z.mean(axis=1, keepdims=True)
                var = z.var(axis=1, keepdims=True)
                inv = 1.0 / np.sqrt(var + LN_EPS)
                xhat = (z - mu) * inv
                rec.update(xhat=xhat, inv=inv)
                z = xhat * p[f"g{l}"] + p[f"s{l}"]
            elif spec.norm == "batchnorm":
                if mode == "train":
                    mu = z.mean(axis=0)
                    var = z.var(axis=0)
                    if update_stats:
                        n = z.shape[0]
                        p[f"rm{l}"] *= 1 - BN_MOMENTUM
                        p[f"rm{l}"] += BN_MOMENTUM * mu
                        p[f"rv{l}"] *= 1 - BN_MOMENTUM
                        p[f"rv{l}"] += BN_MOMENTUM * var * (n / (n - 1))
                else:
                    mu, var = p[f"rm{l}"], p[f"rv{l}"]
                inv = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (z - mu) * inv
                rec.update(xhat=xhat, inv=inv)
                z = xhat * p[f"g{l}"] + p[f"s{l}"]
            rec["pre"] = z
            if spec.activation == "relu":
                a = np.maximum(z, 0.0)
            else:
                sig = 1.0 / (1.0 + np.exp(-z))
                rec["sig"] = sig
                a = z * sig
            layers.append(rec)
        return a, ForwardCache(mode, self.version, x, cats, layers)

    def __call__(self, x, cats=None) -> np.ndarray:
        return self.forward(x, cats, "eval")[0]

    # -- backward --------------------------------------------------------
    def backward(self, cache: ForwardCache, grad_output, return_input_grad: bool = False):
        """Gradients of ``sum(outputs * grad_output)`` for every trainable tensor."""
        if cache.mode != "train":
            raise NetError("backward needs a cache from a train-mode forward")
        if cache.version != self.version:
            raise NetError("stale cache: parameters changed since the forward pass")
        p, spec = self.params, self.spec
        g = np.asarray(grad_output, dtype=self.dtype)
        n_hidden = len(spec.hidden)
        if g.shape != (cache.layers[-1]["a"].shape[0], spec.output_dim):
            raise NetError(f"grad_output shape {g.shape} does not match outputs")
        grads: dict[str, np.ndarray] = {}
        for l in range(n_hidden, -1, -1):
            rec = cache.layers[l]
            if l < n_hidden:
                z = rec["pre"]
                if spec.activation == "relu":
                    g = g * (z > 0)
                else:
                    sig = rec["sig"]
                    g = g * (sig * (1.0 + z * (1.0 - sig)))
                if spec.norm is not None:
                    xhat, inv = rec["xhat"], rec["inv"]
                    grads[f"g{l}"] = (g * xhat).sum(axis=0)
                    grads[f"s{l}"] = g.sum(axis=0)
                    dx = g * p[f"g{l}"]
                    ax = 1 if spec.norm == "layernorm" else 0
                    g = inv * (dx - dx.mean(axis=ax, keepdims=True)
                               - xhat * (dx * xhat).mean(axis=ax, keepdims=True))
            grads[f"W{l}"] = rec["a"].T @ g
            grads[f"b{l}"] = g.sum(axis=0)
            g = g @ p[f"W{l}"].T
        col = spec.input_dim
        for k, (c, e) in enumerate(zip(cache.cats, spec.embeddings)):
            dE = np.zeros_like(p[f"E{k}"])
            np.add.at(dE, c, g[:, col:col + e.dim])
            grads[f"E{k}"] = dE
            col += e.dim
        ordered = {k: grads[k] for k in self.trainable}
        if return_input_grad:
            return ordered, g[:, : spec.input_dim]
        return ordered

    # -- persistence -----------------------------------------------------
    def save(self, path) -> None:
        write_container(path, self.params, {"spec": self.spec.to_dict()})

    @classmethod
    def load(cls, path) -> "Mlp":
        arrays, meta = read_container(path)
        return cls(MlpSpec.from_dict(meta["spec"]), arrays)


def mlp_init(spec: MlpSpec, seed: int) -> Mlp:
    """Glorot-uniform weights, zero biases, unit norm scales, N(0, 0.02^2) embeddings."""
    rng = stream(seed, "mlp_init")
    params: dict[str, np.ndarray] = {}
    w = spec.widths
    for l in range(len(w) - 1):
        bound = math.sqrt(6.0 / (w[l] + w[l + 1]))
        params[f"W{l}"] = rng.uniform(-bound, bound, size=(w[l], w[l + 1]))
        params[f"b{l}"] = np.zeros(w[l + 1])
        if l < len(spec.hidden) and spec.norm is not None:
            params[f"g{l}"] = np.ones(w[l + 1])
            params[f"s{l}"] = np.zeros(w[l + 1])
            if spec.norm == "batchnorm":
                params[f"rm{l}"] = np.zeros(w[l + 1])
                params[f"rv{l}"] = np.ones(w[l + 1])
    for k, e in enumerate(spec.embeddings):
        params[f"E{k}"] = 0.02 * rng.standard_normal((e.cardinality, e.dim))
    return Mlp(spec, params)


def forward(net: Mlp, x, cats=None, mode: str = "eval"):
    return net.forward(x, cats, mode)


def backward(net: Mlp, cache: ForwardCache, grad_output):
    return net.backward(cache, grad_output)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(net: Mlp, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam, in place. Weight decay (AdamW) touches ``W*`` only."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in tensor {name!r}")
        if g.shape != net.params[name].shape:
            raise NetError(f"gradient {name!r} has shape {g.shape}, expected {net.params[name].shape}")
    state.step += 1
    b1, b2, t = state.beta1, state.beta2, state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        p = net.params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if state.weight_decay and name.startswith("W"):
            p *= 1.0 - state.lr * state.weight_decay
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    net.version += 1


def cosine_lr(base: float, step: int, total: int) -> float:
    """Cosine annealing from ``base`` at step 0 to 0 at ``total``."""
    return 0.5 * base * (1.0 + math.cos(math.pi * min(step, total) / max(total, 1)))


# -- gradient checking ----------------------------------------------------

def _probe(kind: str, shape, rng) -> tuple[Callable[[np.ndarray], float], Callable[[np.ndarray], np.ndarray]]:
    if kind == "linear":
        R = rng.standard_normal(shape)
        return (lambda out: float(np.sum(out * R))), (lambda out: R)
    if kind == "mse":
        T = rng.standard_normal(shape)
        return (lambda out: 0.5 * float(np.sum((out - T) ** 2))), (lambda out: out - T)
    raise NetError(f"unknown probe {kind!r}")


def grad_check(spec: MlpSpec, seed: int = 0, probe: str = "linear", epsilon: float = 1e-5,
               n_coords: int = 200, batch: int = 8, corrupt: bool = False,
               floor: float = 1e-6) -> float:
    """Max relative error of ``backward`` against central differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``. At
    least ``n_coords`` coordinates are drawn across all trainable tensors
    (every coordinate when there are fewer). ``corrupt`` perturbs the
    analytic gradient as a negative control.
    """
    rng = stream(seed, "grad_check")
    net = mlp_init(spec, seed)
    for k in net.params:  # move norms and biases off their trivial init
        if not _is_buffer(k) and not k.startswith("W"):
            net.params[k] = net.params[k] + 0.3 * rng.standard_normal(net.params[k].shape)
    x = rng.standard_normal((batch, spec.input_dim))
    cats = [rng.integers(0, e.cardinality, batch) for e in spec.embeddings]
    out, cache = net.forward(x, cats, "train", update_stats=False)
    loss, dloss = _probe(probe, out.shape, rng)
    grads = net.backward(cache, dloss(out))
    if corrupt:
        first = next(iter(grads))
        grads[first] = grads[first] * 1.1 + 1e-3
    coords = [(k, i) for k in net.trainable for i in range(net.params[k].size)]
    if len(coords) > n_coords:
        pick = rng.choice(len(coords), size=n_coords, replace=False)
        if corrupt:
            pick[0] = 0
        coords = [coords[i] for i in sorted(pick)]
    worst = 0.0
    for name, i in coords:
        flat = net.params[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + epsilon
        lp = loss(net.forward(x, cats, "train", update_stats=False)[0])
        flat[i] = orig - epsilon
        lm = loss(net.forward(x, cats, "train", update_stats=False)[0])
        flat[i] = orig
        num = (lp - lm) / (2.0 * epsilon)
        ana = grads[name].reshape(-1)[i]
        worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
    return worst


def train_regression_smoke(spec: MlpSpec, steps: int = 100, seed: int = 0, lr: float = 1e-2
                           ) -> list[float]:
    """Full-batch Adam on a fixed linear target; returns the loss per step."""
    rng = stream(seed, "smoke")
    net = mlp_init(spec, seed)
    X = rng.standard_normal((64, spec.input_dim))
    Wt = rng.standard_normal((spec.input_dim, spec.output_dim))
    Y = X @ Wt
    cats = [rng.integers(0, e.cardinality, 64) for e in spec.embeddings]
    state = AdamState(lr=lr)
    losses = []
    for _ in range(steps):
        out, cache = net.forward(X, cats, "train")
        diff = out - Y
        losses.append(float(np.mean(diff ** 2)))
        adam_step(net, net.backward(cache, 2.0 * diff / diff.size), state)
    return losses


def score_net_spec(d: int) -> MlpSpec:
    return MlpSpec(d + 1, (128, 128, 128, 128), d, "relu", None)


def velocity_spec(d: int, node_count: int, class_count: int) -> MlpSpec:
    return MlpSpec(d + 1 + node_count, (512, 512), d, "silu", "layernorm",
                   (Embedding(class_count, 16),))


def split_model_spec(d: int, levels: int) -> MlpSpec:
    return MlpSpec(d, (256, 256), 2, "relu", "batchnorm", (Embedding(levels, 32),))

