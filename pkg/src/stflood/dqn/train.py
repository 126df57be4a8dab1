"""Offline DQN training: epsilon-greedy exploration, uniform experience replay, target network.

Works with any environment exposing ``reset(rng) -> obs`` and
``step(action) -> (obs, reward, done)``; ``done`` marks an episode cut, not a
terminal state, unless the environment sets ``terminal_on_done = True``.
"""

from __future__ import annotations

import logging
import pickle
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from stflood.core import ValidationError
from stflood.dqn.model import N_ACTIONS, N_HIDDEN, N_INPUT, SCALE, MlpModel, _div_round, round_half_away

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 200_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_steps: int = 100_000
    gamma: float = 0.7
    learning_rate: float = 0.001
    # linear anneal to this rate over the run; None keeps the rate constant
    learning_rate_end: float | None = 1e-5
    batch_size: int = 32
    replay_capacity: int = 50_000
    target_sync_interval: int = 1000
    learn_start: int = 1000
    optimizer: str = "adam"
    n_hidden: int = N_HIDDEN
    # pick a' with the online network, evaluate it with the target network
    double_q: bool = True
    # the final fraction of iterations acts, bootstraps and takes gradients through
    # the scale-100 fixed-point forward pass (straight-through rounding); the
    # returned model then sits on the fixed-point grid
    quant_aware_fraction: float = 0.25

    def __post_init__(self):
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError("gamma must be in [0, 1)")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValidationError("learning_rate, batch_size and replay_capacity must be positive and consistent")
        if self.iterations < 0 or self.epsilon_decay_steps < 1 or self.target_sync_interval < 0:
            raise ValidationError("iteration counts must be non-negative")
        if not 0.0 <= self.quant_aware_fraction <= 1.0:
            raise ValidationError("quant_aware_fraction must be in [0, 1]")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


def epsilon_at(step: int, config: TrainConfig = TrainConfig()) -> float:
    frac = min(step / config.epsilon_decay_steps, 1.0)
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


class ReplayBuffer:
    def __init__(self, capacity: int, n_in: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, n_in))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, n_in))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, r, s2, terminal=False) -> None:
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s2[i], self.terminal[i] = s, a, r, s2, terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch: int):
        idx = rng.integers(0, self.size, batch)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.terminal[idx]


def snap_to_grid(model: MlpModel, scale: int = SCALE) -> MlpModel:
    """Copy of ``model`` with every parameter rounded to a multiple of 1/scale."""
    return MlpModel(*(round_half_away(p * scale) / scale for p in model.params()))


def grid_forward(model: MlpModel, x: np.ndarray, scale: int = SCALE):
    """Forward pass with the integer arithmetic of fixed-point inference, in float units.

    Returns (q, pre-activation, hidden, rounded input, grid w2) for backprop; the
    hidden layer is rounded exactly like the fixed-point path, q is left unrounded.
    """
    xq = round_half_away(x * scale).astype(np.float64)
    w1, b1, w2, b2 = (round_half_away(p * scale).astype(np.float64) for p in model.params())
    acc1 = xq @ w1 + b1 * scale
    h = np.maximum(_div_round(acc1, scale), 0.0)
    q = (h @ w2 + b2 * scale) / scale**2
    return q, acc1 / scale**2, h / scale, xq / scale, w2 / scale


def _forward(model: MlpModel, x: np.ndarray, on_grid: bool):
    if on_grid:
        return grid_forward(model, x)
    q, z1, h = model.forward(x)
    return q, z1, h, x, model.w2


def td_targets(target: MlpModel, r, s2, terminal, gamma: float, online: MlpModel | None = None,
               on_grid: bool = False) -> np.ndarray:
    q2 = _forward(target, s2, on_grid)[0]
    if online is None:
        nxt = q2.max(axis=1)
    else:
        nxt = q2[np.arange(len(q2)), _forward(online, s2, on_grid)[0].argmax(axis=1)]
    return r + gamma * np.where(terminal, 0.0, nxt)


def td_loss_and_grads(model: MlpModel, s, a, y, on_grid: bool = False) -> tuple[float, dict[str, np.ndarray]]:
    """0.5 * mean((Q(s, a) - y)^2) and its gradient with respect to every parameter.

    With ``on_grid`` the loss is taken through the fixed-point forward pass and
    rounding is treated as the identity when differentiating.
    """
    q, z1, h, s, w2 = _forward(model, s, on_grid)
    n = len(a)
    rows = np.arange(n)
    diff = q[rows, a] - y
    loss = 0.5 * float(np.mean(diff**2))
    dq = np.zeros_like(q)
    dq[rows, a] = diff / n
    dh = dq @ w2.T
    dz = dh * (z1 > 0)
    grads = {"w1": s.T @ dz, "b1": dz.sum(axis=0), "w2": h.T @ dq, "b2": dq.sum(axis=0)}
    return loss, grads


class _Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m, self.v, self.t = {}, {}, 0

    def apply(self, model: MlpModel, grads) -> None:
        self.t += 1
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mh = m / (1 - self.b1**self.t)
            vh = v / (1 - self.b2**self.t)
            getattr(model, k)[...] -= self.lr * mh / (np.sqrt(vh) + self.eps)


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def apply(self, model: MlpModel, grads) -> None:
        for k, g in grads.items():
            getattr(model, k)[...] -= self.lr * g


def _obs(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


CURVE_INTERVAL = 1000


@dataclass
class TrainingLog:
    episode_returns: list[float] = field(default_factory=list)
    # (step, epsilon, last minibatch loss, mean return of the last 50 episodes)
    curve: list[tuple[int, float, float, float]] = field(default_factory=list)

    def curve_csv(self) -> str:
        lines = ["step,epsilon,loss,mean_return"]
        for step, eps, loss, ret in self.curve:
            lines.append(f"{step},{eps:.6f},{loss:.6g},{ret:.6g}")
        return "\n".join(lines) + "\n"


class Trainer:
    """Resumable training loop; one environment step and one minibatch update per iteration."""

    def __init__(self, env, config: TrainConfig = TrainConfig(), seed: int = 0):
        if env is None:
            raise ValidationError("training needs an environment")
        self.env = env
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        n_in = getattr(env, "n_inputs", N_INPUT)
        self.n_actions = getattr(env, "n_actions", N_ACTIONS)
        self.model = MlpModel.initialize(self.rng, n_in, config.n_hidden, self.n_actions)
        self.target = self.model.copy()
        self.buffer = ReplayBuffer(config.replay_capacity, n_in)
        self.opt = _Adam(config.learning_rate) if config.optimizer == "adam" else _Sgd(config.learning_rate)
        self.step = 0
        self.log = TrainingLog()
        self._obs = None
        self._ep_return = 0.0
        self._loss = float("nan")

    @property
    def quant_aware_start(self) -> int | None:
        cfg = self.config
        if cfg.quant_aware_fraction == 0:
            return None
        return cfg.iterations - int(round(cfg.quant_aware_fraction * cfg.iterations))

    @property
    def on_grid(self) -> bool:
        start = self.quant_aware_start
        return start is not None and self.step >= start

    def act(self, obs: np.ndarray) -> int:
        if self.rng.random() < epsilon_at(self.step, self.config):
            return int(self.rng.integers(self.n_actions))
        return int(np.argmax(_forward(self.model, obs[None, :], self.on_grid)[0][0]))

    def run(self, iterations: int | None = None) -> MlpModel:
        """Advance to ``iterations`` total steps (default: the configured count)."""
        cfg = self.config
        end = cfg.iterations if iterations is None else iterations
        terminal_on_done = getattr(self.env, "terminal_on_done", False)
        while self.step < end:
            if self._obs is None:
                self._obs = _obs(self.env.reset(self.rng))
                self._ep_return = 0.0
            a = self.act(self._obs)
            nxt, r, done = self.env.step(a)
            nxt = _obs(nxt)
            self.buffer.add(self._obs, a, r, nxt, done and terminal_on_done)
            self._ep_return += r
            self._obs = None if done else nxt
            if done:
                self.log.episode_returns.append(self._ep_return)
            self.step += 1
            if len(self.buffer) >= max(cfg.learn_start, cfg.batch_size):
                s, act, rew, s2, term = self.buffer.sample(self.rng, cfg.batch_size)
                tgt = self.target if cfg.target_sync_interval else self.model
                grid = self.on_grid
                y = td_targets(tgt, rew, s2, term, cfg.gamma, self.model if cfg.double_q else None, grid)
                loss, grads = td_loss_and_grads(self.model, s, act, y, grid)
                if cfg.learning_rate_end is not None:
                    frac = min(self.step / max(cfg.iterations, 1), 1.0)
                    self.opt.lr = cfg.learning_rate + frac * (cfg.learning_rate_end - cfg.learning_rate)
                self.opt.apply(self.model, grads)
                self._loss = loss
            if cfg.target_sync_interval and self.step % cfg.target_sync_interval == 0:
                self.target = self.model.copy()
            if self.step % CURVE_INTERVAL == 0:
                recent = self.log.episode_returns[-50:]
                mean_ret = float(np.mean(recent)) if recent else float("nan")
                self.log.curve.append((self.step, epsilon_at(self.step, cfg), self._loss, mean_ret))
                if self.step % 20_000 == 0:
                    log.info("step %d eps %.3f mean return %.3f", self.step, epsilon_at(self.step, cfg), mean_ret)
        if self.quant_aware_start is not None and self.step >= cfg.iterations:
            return snap_to_grid(self.model)
        return self.model

    def checkpoint(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            pickle.dump({"config": asdict(self.config), "trainer": self}, fh)

    @staticmethod
    def resume(path: str | Path) -> "Trainer":
        with open(path, "rb") as fh:
            blob = pickle.load(fh)
        return blob["trainer"]


def train(env, config: TrainConfig = TrainConfig(), seed: int = 0) -> MlpModel:
    return Trainer(env, config, seed).run()
