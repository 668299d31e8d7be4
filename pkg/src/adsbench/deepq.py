"""Multilayer perceptron with hand-written backprop, replay buffer, DQN agent."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from adsbench.actions import N_ACTIONS
from adsbench.agents import OBS_SIZE, random_select
from adsbench.monitors import Requirement
from adsbench.routes import RouteSpec


class DiagnosticsError(ValueError):
    """Non-finite values reached the network."""


class Mlp:
    """Fully connected net: ReLU hidden layers, identity output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator | None = None, dtype=np.float64) -> None:
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError("need at least two positive layer sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.dtype = np.dtype(dtype)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                w = np.zeros((n_in, n_out), dtype=self.dtype)
            else:
                # He initialization
                w = rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out)).astype(self.dtype)
            self.weights.append(w)
            self.biases.append(np.zeros(n_out, dtype=self.dtype))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> Mlp:
        net = Mlp.__new__(Mlp)
        net.sizes = self.sizes
        net.dtype = self.dtype
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net

    def load_from(self, other: Mlp) -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for one input (1-D) or a batch (2-D)."""
        x = np.asarray(x, dtype=self.dtype)
        if not np.all(np.isfinite(x)):
            raise DiagnosticsError("non-finite network input")
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def forward_cache(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batch forward keeping each layer's input for backprop."""
        inputs = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h, inputs

    def backward(self, inputs: list[np.ndarray], grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients (same order as ``params``) given dL/d(output)."""
        grads_w: list[np.ndarray] = []
        grads_b: list[np.ndarray] = []
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a = inputs[i]
            grads_w.append(a.T @ g)
            grads_b.append(g.sum(axis=0))
            if i > 0:
                g = (g @ self.weights[i].T) * (a > 0.0)
        out = []
        for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
            out.extend((gw, gb))
        return out

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "dtype": self.dtype.name,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Mlp:
        net = cls(data["sizes"], dtype=data.get("dtype", "float64"))
        for i, (w, b) in enumerate(zip(data["weights"], data["biases"])):
            net.weights[i][...] = np.asarray(w)
            net.biases[i][...] = np.asarray(b)
        return net


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * math.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= scale * m / (np.sqrt(v) + self.eps)


def huber(residual: np.ndarray, delta: float = 1.0) -> tuple[float, np.ndarray]:
    """Mean Huber loss and its derivative w.r.t. each residual."""
    a = np.abs(residual)
    quad = a <= delta
    loss = np.where(quad, 0.5 * residual * residual, delta * (a - 0.5 * delta))
    grad = np.where(quad, residual, delta * np.sign(residual))
    n = residual.shape[0]
    return float(loss.mean()), grad / n


def grad_check(net: Mlp, rng: np.random.Generator, batch: int = 4, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    Loss is 0.5 * mean squared error against a random target. Parameters
    whose perturbation moves any hidden pre-activation across zero (a ReLU
    kink) are skipped, since the function is not differentiable there.
    """
    x = rng.normal(size=(batch, net.sizes[0]))
    y = rng.normal(size=(batch, net.sizes[-1]))

    def value(n: Mlp) -> float:
        out = n.forward(x)
        return 0.5 * float(np.sum((out - y) ** 2)) / batch

    def pattern(n: Mlp) -> list[np.ndarray]:
        pats = []
        hcur = x
        for i, (w, b) in enumerate(zip(n.weights, n.biases)):
            z = hcur @ w + b
            if i < len(n.weights) - 1:
                pats.append(z > 0.0)
                hcur = np.maximum(z, 0.0)
        return pats

    out, inputs = net.forward_cache(x)
    grads = net.backward(inputs, (out - y) / batch)
    base = pattern(net)
    worst = 0.0
    for p, g in zip(net.params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            plus = value(net)
            kink = any(np.any(a != b) for a, b in zip(pattern(net), base))
            flat[j] = orig - h
            minus = value(net)
            kink = kink or any(np.any(a != b) for a, b in zip(pattern(net), base))
            flat[j] = orig
            if kink:
                continue
            numeric = (plus - minus) / (2.0 * h)
            analytic = float(gflat[j])
            err = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, err)
    return worst


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions stored column-wise."""

    def __init__(self, capacity: int, obs_size: int = OBS_SIZE) -> None:
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size))
        self.next_obs = np.zeros((capacity, obs_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, obs, action: int, reward: float, next_obs, done: bool) -> None:
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = done
        self.inserted += 1

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(len(self), size=batch)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.done[idx]


@dataclass(frozen=True)
class DqnConfig:
    sizes: tuple[int, ...] = (OBS_SIZE, 64, 64, N_ACTIONS)
    gamma: float = 0.99
    lr: float = 1e-3
    batch: int = 64
    capacity: int = 100_000
    target_sync: int = 1_000
    warmup: int = 1_000
    train_every: int = 1
    huber_delta: float = 1.0
    reward_scale: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d


class DqnAgent:
    """Online/target network pair trained from a replay buffer.

    ``learn_rng`` drives initialization and minibatch sampling; it is kept
    apart from the action rng so action draws match RANDOM's at epsilon 1.
    """

    def __init__(self, config: DqnConfig | None = None, learn_rng: np.random.Generator | None = None,
                 dtype=np.float64) -> None:
        self.config = config or DqnConfig()
        self.learn_rng = learn_rng if learn_rng is not None else np.random.default_rng(0)
        self.online = Mlp(self.config.sizes, self.learn_rng, dtype)
        self.target = self.online.copy()
        self.optimizer = Adam(self.online.params, self.config.lr)
        self.buffer = ReplayBuffer(self.config.capacity, self.config.sizes[0])
        self.updates = 0
        self.steps = 0

    def q_values(self, obs) -> np.ndarray:
        return self.online.forward(obs)

    def train_step(self, rng: np.random.Generator | None = None) -> float | None:
        """One gradient step; None while the buffer is below warmup/batch size."""
        cfg = self.config
        if len(self.buffer) < max(cfg.batch, cfg.warmup):
            return None
        rng = rng if rng is not None else self.learn_rng
        obs, actions, rewards, next_obs, done = self.buffer.sample(cfg.batch, rng)
        next_q = self.target.forward(next_obs).max(axis=1)
        y = rewards * cfg.reward_scale + np.where(done, 0.0, cfg.gamma * next_q)
        out, inputs = self.online.forward_cache(obs)
        rows = np.arange(cfg.batch)
        loss, g = huber(out[rows, actions] - y, cfg.huber_delta)
        grad_out = np.zeros_like(out)
        grad_out[rows, actions] = g
        self.optimizer.step(self.online.backward(inputs, grad_out))
        self.updates += 1
        if self.updates % cfg.target_sync == 0:
            self.target.load_from(self.online)
        if not all(np.all(np.isfinite(p)) for p in self.online.params):
            raise DiagnosticsError("non-finite parameters after training step")
        return loss

    def observe(self, obs, action: int, reward: float, next_obs, done: bool) -> float | None:
        """Store a transition and train on schedule."""
        self.buffer.add(obs, action, reward, next_obs, done)
        self.steps += 1
        if self.steps % self.config.train_every == 0:
            return self.train_step()
        return None

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"config": self.config.to_dict(), "online": self.online.to_dict()}, fh)


def dqn_select(agent: DqnAgent, obs, epsilon: float, rng: np.random.Generator) -> int:
    if epsilon >= 1.0 or (epsilon > 0.0 and rng.random() < epsilon):
        return random_select(rng)
    return int(np.argmax(agent.q_values(obs)))  # first maximum = lowest ActionId


# -- observation scaling -------------------------------------------------------


class ObsNormalizer:
    """Affine map of each observation slot onto [-1, 1], clipped."""

    def __init__(self, route: RouteSpec, frame: str = "absolute") -> None:
        xmin, ymin, xmax, ymax = route.bounds(15.0)
        pi = math.pi
        if frame == "absolute":
            ranges = [
                (xmin, xmax), (ymin, ymax), (-pi, pi), (0.0, 15.0), (-10.0, 10.0),
                (xmin, xmax), (ymin, ymax), (-pi, pi), (0.0, 15.0), (-10.0, 10.0),
                (xmin, xmax), (ymin, ymax), (-pi, pi), (0.0, 3.0),
            ]
        else:
            ranges = [
                (0.0, route.route_length), (-10.0, 10.0), (-pi, pi), (0.0, 15.0), (-10.0, 10.0),
                (0.0, 60.0), (-pi, pi), (-pi, pi), (0.0, 15.0), (-10.0, 10.0),
                (0.0, 60.0), (-pi, pi), (-pi, pi), (0.0, 3.0),
            ]
        ranges += [(0.0, 1.0), (0.0, 1.0), (-90.0, 90.0), (0.0, 1.0), (-1.0, 1.0)]
        lo = np.array([r[0] for r in ranges])
        hi = np.array([r[1] for r in ranges])
        self.center = 0.5 * (lo + hi)
        self.half = 0.5 * (hi - lo)

    def __call__(self, obs) -> np.ndarray:
        z = (np.asarray(obs, dtype=np.float64) - self.center) / self.half
        return np.clip(z, -1.0, 1.0)


class DqnTestingAgent:
    """Campaign-facing wrapper: one objective, normalized observations."""

    technique = "dqn"

    def __init__(self, normalizer: ObsNormalizer, config: DqnConfig | None = None,
                 learn_rng: np.random.Generator | None = None,
                 objective: Requirement = Requirement.R2_DV) -> None:
        self.agent = DqnAgent(config, learn_rng)
        self.normalize = normalizer
        self.objective = Requirement(objective)
        self.obs = None
        self.losses: list[tuple[int, float]] = []

    def reset(self, obs) -> None:
        self.obs = self.normalize(obs)

    def act(self, epsilon: float, rng: np.random.Generator) -> int:
        return dqn_select(self.agent, self.obs, epsilon, rng)

    def learn(self, action: int, rewards, violated, next_obs, done: bool) -> None:
        nxt = self.normalize(next_obs)
        loss = self.agent.observe(self.obs, action, rewards[self.objective], nxt, done)
        if loss is not None and self.agent.updates % 1000 == 0:
            self.losses.append((self.agent.steps, loss))
        self.obs = nxt

    def growth(self) -> list[int]:
        return []


# -- learning-loop sanity task ---------------------------------------------------


def bandit_target(s0: float) -> int:
    return int(math.floor(10.0 * abs(s0))) % N_ACTIONS


def bandit_accuracy(seed: int = 0, steps: int = 20_000, dim: int = 2, n_test: int = 2_000) -> float:
    """Train on a contextual bandit and return greedy accuracy on held-out contexts.

    Contexts are uniform on [-1, 1]^dim; reward is 1 when the action equals
    ``bandit_target(s[0])``. Each step is a terminal transition with gamma 0,
    so this exercises select/store/train without any simulator.
    """
    cfg = DqnConfig(sizes=(dim, 64, 64, N_ACTIONS), gamma=0.0, lr=3e-3, batch=64,
                    capacity=steps, warmup=500, target_sync=500)
    agent = DqnAgent(cfg, np.random.default_rng([seed, 1]))
    rng = np.random.default_rng([seed, 0])
    test = rng.uniform(-1.0, 1.0, size=(n_test, dim))
    truth = np.array([bandit_target(v) for v in test[:, 0]])
    for t in range(steps):
        s = rng.uniform(-1.0, 1.0, size=dim)
        eps = max(0.1, 1.0 - t / (0.5 * steps))
        a = dqn_select(agent, s, eps, rng)
        r = 1.0 if a == bandit_target(s[0]) else 0.0
        agent.observe(s, a, r, s, True)
    greedy = np.argmax(agent.q_values(test), axis=1)
    return float(np.mean(greedy == truth))
