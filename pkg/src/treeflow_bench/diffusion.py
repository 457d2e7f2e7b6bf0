"""DDPM score network, learned forward SDE, reverse probability-flow ODE, SNR proxy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, write_csv
from .io import read_container, write_container
from .nn import AdamState, Mlp, adam_step, cosine_lr, mlp_init, score_net_spec
from .rng import stream

log = logging.getLogger(__name__)


class DiffusionError(ValueError):
    pass


@dataclass(frozen=True)
class BetaSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def N(self) -> int:
        return len(self.betas)

    def beta(self, i: int) -> float:
        """Per-step beta for step index i in 1..N."""
        return float(self.betas[i - 1])

    def alpha_bar(self, i: int) -> float:
        return float(self.alpha_bars[i - 1])


def linear_beta_schedule(N: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02) -> BetaSchedule:
    if N < 2:
        raise DiffusionError("schedule needs N >= 2")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise DiffusionError("need 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, N)
    alphas = 1.0 - betas
    return BetaSchedule(betas, alphas, np.cumprod(alphas))


def snr_entropy_proxy(schedule: BetaSchedule, cumulative: bool = True) -> np.ndarray:
    """1/(1+SNR) per step, SNR = abar/(1-abar); ``cumulative=False`` uses the per-step alpha."""
    a = schedule.alpha_bars if cumulative else schedule.alphas
    # 1/(1 + a/(1-a)) simplifies to 1 - a; the closed form avoids a rounding step
    return 1.0 - a


@dataclass
class ScoreNet:
    """Noise-prediction network; score = -eps_hat / sqrt(1 - abar)."""

    net: Mlp
    schedule: BetaSchedule
    loss_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.net.spec.output_dim

    def predict_noise(self, x: np.ndarray, i: int) -> np.ndarray:
        t = np.full((x.shape[0], 1), i / self.schedule.N)
        return self.net(np.concatenate([x, t], axis=1))

    def score(self, x: np.ndarray, i: int) -> np.ndarray:
        return -self.predict_noise(x, i) / np.sqrt(1.0 - self.schedule.alpha_bar(i))

    def save(self, path) -> None:
        arrays = dict(self.net.params)
        arrays["__betas"] = self.schedule.betas
        write_container(path, arrays, {"spec": self.net.spec.to_dict()})

    @classmethod
    def load(cls, path) -> "ScoreNet":
        from .nn import MlpSpec

        arrays, meta = read_container(path)
        betas = arrays.pop("__betas")
        sched = BetaSchedule(betas, 1.0 - betas, np.cumprod(1.0 - betas))
        return cls(Mlp(MlpSpec.from_dict(meta["spec"]), arrays), sched)


@dataclass(frozen=True)
class ScoreTrainConfig:
    epochs: int = 400
    batch: int = 128
    lr: float = 1e-3
    seed: int = 0


def train_score_net(ds: Dataset | np.ndarray, schedule: BetaSchedule,
                    cfg: ScoreTrainConfig = ScoreTrainConfig()) -> ScoreNet:
    """Epsilon-prediction DDPM training with Adam and per-step cosine annealing."""
    X = ds.features if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    n, d = X.shape
    if d < 1 or n < 1:
        raise DiffusionError("training data must be non-empty")
    net = mlp_init(score_net_spec(d), cfg.seed)
    rng = stream(cfg.seed, "train_score_net")
    state = AdamState(lr=cfg.lr)
    steps_per_epoch = -(-n // cfg.batch)
    total = cfg.epochs * steps_per_epoch
    sqrt_ab = np.sqrt(schedule.alpha_bars)
    sqrt_1mab = np.sqrt(1.0 - schedule.alpha_bars)
    history = []
    step = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(steps_per_epoch):
            x0 = X[perm[s * cfg.batch:(s + 1) * cfg.batch]]
            b = x0.shape[0]
            i = rng.integers(1, schedule.N + 1, size=b)
            eps = rng.standard_normal((b, d))
            xt = sqrt_ab[i - 1, None] * x0 + sqrt_1mab[i - 1, None] * eps
            inp = np.concatenate([xt, (i / schedule.N)[:, None]], axis=1)
            out, cache = net.forward(inp, mode="train")
            diff = out - eps
            loss = float(np.mean(diff * diff))
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite score-net loss at step {step}")
            state.lr = cosine_lr(cfg.lr, step, total)
            adam_step(net, net.backward(cache, 2.0 * diff / diff.size), state)
            epoch_loss += loss * b
            step += 1
        history.append(epoch_loss / n)
    return ScoreNet(net, schedule, history)


def denoising_loss(model: ScoreNet, X: np.ndarray, seed: int = 0, draws: int = 4) -> float:
    """Monte Carlo estimate of the epsilon-prediction MSE on ``X``."""
    rng = stream(seed, "denoising_loss")
    sched = model.schedule
    total = 0.0
    for _ in range(draws):
        i = rng.integers(1, sched.N + 1, size=X.shape[0])
        eps = rng.standard_normal(X.shape)
        ab = sched.alpha_bars[i - 1, None]
        xt = np.sqrt(ab) * X + np.sqrt(1 - ab) * eps
        out = model.net(np.concatenate([xt, (i / sched.N)[:, None]], axis=1))
        total += float(np.mean((out - eps) ** 2))
    return total / draws


@dataclass(frozen=True)
class TrajectoryBundle:
    times: np.ndarray
    positions: np.ndarray  # [steps+1, n_points, d]

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.positions[k]

    def save(self, path) -> None:
        write_container(path, {"times": self.times, "positions": self.positions})

    @classmethod
    def load(cls, path) -> "TrajectoryBundle":
        arrays, _ = read_container(path)
        return cls(arrays["times"], arrays["positions"])

    def dump_csv(self, path, t: float, labels=None) -> None:
        pts = self.at(t)
        names = [f"x{j}" for j in range(pts.shape[1])]
        extra = {"label": [int(v) for v in labels]} if labels is not None else None
        write_csv(Path(path), pts, names, extra)


def beta_rate(schedule: BetaSchedule, i: int, time_scale: str) -> float:
    """Drift/diffusion rate used at step i.

    ``"continuous"``: beta(t_i) = N * beta_i, the continuous-time rate whose
    Euler discretization with dt = 1/N reproduces the DDPM kernel.
    ``"per-step"``: the raw per-step beta_i.
    """
    if time_scale == "continuous":
        return schedule.N * schedule.beta(i)
    if time_scale == "per-step":
        return schedule.beta(i)
    raise DiffusionError(f"unknown time_scale {time_scale!r}")


def euler_maruyama_step(x, beta: float, score, dt: float, z) -> np.ndarray:
    """x + [-0.5 beta x - 0.5 beta s] dt + sqrt(beta) sqrt(dt) z."""
    return x + (-0.5 * beta * x - 0.5 * beta * score) * dt + np.sqrt(beta * dt) * z


def simulate_learned_forward(model: ScoreNet, points: np.ndarray, seed: int = 0,
                             time_scale: str = "continuous") -> TrajectoryBundle:
    """Euler-Maruyama on the learned forward SDE, recording every grid state."""
    x = np.array(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise DiffusionError(f"points must have shape [n, {model.dim}]")
    N = model.schedule.N
    dt = 1.0 / N
    rng = stream(seed, "learned_forward")
    out = np.empty((N + 1,) + x.shape)
    out[0] = x
    for i in range(1, N + 1):
        z = rng.standard_normal(x.shape)
        x = euler_maruyama_step(x, beta_rate(model.schedule, i, time_scale), model.score(x, i), dt, z)
        if not np.all(np.isfinite(x)):
            bad = int(np.argwhere(~np.isfinite(x))[0, 0])
            raise FloatingPointError(f"non-finite state at step {i}, point {bad}")
        out[i] = x
    return TrajectoryBundle(np.arange(N + 1) / N, out)


def reverse_pf_ode(model: ScoreNet, noise: np.ndarray, steps: int | None = None,
                   time_scale: str = "continuous") -> TrajectoryBundle:
    """Deterministic Euler for dx/dt = -0.5 beta(t) [x + s(x, t)], integrated from t=1 to 0.

    Returned ``times`` run 1 -> 0; ``positions[0]`` is the input noise.
    """
    N = model.schedule.N
    steps = N if steps is None else int(steps)
    if steps < 1:
        raise DiffusionError("steps must be >= 1")
    x = np.array(noise, dtype=np.float64)
    dt = 1.0 / steps
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    times = np.empty(steps + 1)
    times[0] = 1.0
    for k in range(steps):
        t = 1.0 - k * dt
        i = min(N, max(1, int(np.ceil(t * N - 1e-9))))
        beta = beta_rate(model.schedule, i, time_scale)
        x = x + 0.5 * beta * (x + model.score(x, i)) * dt
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite PF-ODE state at step {k + 1}")
        out[k + 1] = x
        times[k + 1] = 1.0 - (k + 1) * dt
    return TrajectoryBundle(times, out)
