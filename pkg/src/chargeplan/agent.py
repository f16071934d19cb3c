"""Deep Q-learning over the placement environment, in plain numpy.

The value network is a ReLU multilayer perceptron trained with SGD plus
momentum on the Huber temporal-difference loss. Everything is driven by one
``numpy.random.Generator`` seeded from the config, so a run is reproducible
bit for bit on a given platform.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import N_ACTIONS, PlacementEnv
from .plan import ChargingPlan

CHECKPOINT_FORMAT = "chargeplan-qnet"
CHECKPOINT_VERSION = 1
LOG_COLUMNS = ("episode", "steps", "final_score", "epsilon", "loss_mean")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 128
    buffer_size: int = 10_000
    learning_rate: float = 1e-3
    episodes_max: int = 2_000
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.1     # share of the step budget spent annealing epsilon
    target_sync_steps: int = 1_000
    hidden_layers: tuple[int, ...] = (64, 64)
    seed: int = 0
    momentum: float = 0.9
    train_freq: int = 4           # env steps per gradient update
    max_grad_norm: float = 10.0
    huber_delta: float = 1.0
    eval_every: int = 10          # episodes between greedy snapshot evaluations

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if self.batch_size > self.buffer_size:
            raise ValueError("batch_size must not exceed buffer_size")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise KeyError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**values)


class QNetwork:
    """Fully connected ReLU network mapping an observation to one value per action."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, params=None):
        self.sizes = tuple(int(s) for s in sizes)
        if params is not None:
            self.params = [np.array(p, dtype=float) for p in params]
            return
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            self.params.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))
        # small output layer keeps early value estimates near zero
        self.params[-2] *= 0.1

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> "QNetwork":
        return QNetwork(self.sizes, params=[p.copy() for p in self.params])

    def forward(self, x: np.ndarray, keep: bool = False):
        acts = [x]
        h = x
        for k in range(self.n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = h @ W + b
            h = np.maximum(z, 0.0) if k < self.n_layers - 1 else z
            acts.append(h)
        return (h, acts) if keep else h

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(np.atleast_2d(x))

    def backward(self, acts, grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients given d(loss)/d(output) and cached activations."""
        grads = [None] * len(self.params)
        g = grad_out
        for k in reversed(range(self.n_layers)):
            h_in = acts[k]
            grads[2 * k] = h_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.params[2 * k].T) * (acts[k] > 0)
        return grads

    # -- persistence -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "sizes": list(self.sizes),
            "params": [{"shape": list(p.shape), "values": p.ravel().tolist()} for p in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QNetwork":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a chargeplan Q-network checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        params = [np.array(p["values"], dtype=float).reshape(p["shape"]) for p in d["params"]]
        return cls(d["sizes"], params=params)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "QNetwork":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def huber(x: np.ndarray, delta: float):
    """Elementwise Huber loss and its derivative."""
    a = np.abs(x)
    quad = a <= delta
    loss = np.where(quad, 0.5 * x * x, delta * (a - 0.5 * delta))
    grad = np.where(quad, x, delta * np.sign(x))
    return loss, grad


def td_targets(rewards, next_q_target, dones, gamma):
    """r + gamma * max_a' Q_target(s', a'), with no bootstrap past a terminal step."""
    return rewards + gamma * (1.0 - dones) * next_q_target.max(axis=1)


def td_loss_and_grads(net: QNetwork, obs, actions, targets, delta: float = 1.0):
    q, acts = net.forward(obs, keep=True)
    n = len(actions)
    err = q[np.arange(n), actions] - targets
    loss, dloss = huber(err, delta)
    grad_out = np.zeros_like(q)
    grad_out[np.arange(n), actions] = dloss / n
    return float(loss.mean()), net.backward(acts, grad_out)


class ReplayBuffer:
    """Fixed-capacity ring of transitions; oldest entries are overwritten first."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action, reward, next_obs, done):
        i = self.pos
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]

    def ordered(self):
        """Stored transitions oldest first, as (obs, actions, rewards, next_obs, dones)."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (np.arange(self.capacity) + self.pos) % self.capacity
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]


def act(policy: QNetwork, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(policy(obs)[0]))


class SGDMomentum:
    def __init__(self, params, lr: float, momentum: float, max_grad_norm: float | None = None):
        self.lr = lr
        self.momentum = momentum
        self.max_grad_norm = max_grad_norm
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        if self.max_grad_norm:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        for p, v, g in zip(params, self.velocity, grads):
            v *= self.momentum
            v -= self.lr * g
            p += v


def epsilon_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    span = max(1, int(cfg.eps_fraction * total_steps))
    frac = min(1.0, step / span)
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


def greedy_rollout(policy: QNetwork, env: PlacementEnv, initial: ChargingPlan | None = None):
    """One epsilon-zero episode; returns (final plan, final score, episode length)."""
    obs = env.reset(initial)
    done = False
    steps = 0
    while not done:
        a = int(np.argmax(policy(obs)[0]))
        obs, _, done, _ = env.step(a)
        steps += 1
    return env.plan, env.state.prev_score, steps


@dataclass
class TrainResult:
    policy: QNetwork
    best_score: float
    best_plan: ChargingPlan
    log: list[dict] = field(default_factory=list)
    config: TrainConfig | None = None


def train(env: PlacementEnv, config: TrainConfig | None = None, progress=None) -> TrainResult:
    """Standard DQN loop.

    The returned policy is the snapshot with the best greedy-rollout score
    seen at the periodic evaluations (every ``eval_every`` episodes and after
    the last one).
    """
    cfg = config or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    obs_dim = env.obs_dim
    online = QNetwork((obs_dim, *cfg.hidden_layers, N_ACTIONS), rng)
    target = online.copy()
    opt = SGDMomentum(online.params, cfg.learning_rate, cfg.momentum, cfg.max_grad_norm)
    buf = ReplayBuffer(cfg.buffer_size, obs_dim)
    total_steps = cfg.episodes_max * env.i_max

    best_policy = online.copy()
    best_plan, best_score, _ = greedy_rollout(best_policy, env)
    log: list[dict] = []
    step = 0
    for episode in range(1, cfg.episodes_max + 1):
        obs = env.reset()
        done = False
        ep_steps = 0
        losses = []
        eps = epsilon_at(step, total_steps, cfg)
        while not done:
            eps = epsilon_at(step, total_steps, cfg)
            a = act(online, obs, eps, rng)
            next_obs, r, done, _ = env.step(a)
            buf.add(obs, a, r, next_obs, done)
            obs = next_obs
            step += 1
            ep_steps += 1
            if len(buf) >= cfg.batch_size and step % cfg.train_freq == 0:
                o, acts_, rew, o2, dn = buf.sample(cfg.batch_size, rng)
                y = td_targets(rew, target(o2), dn, cfg.gamma)
                loss, grads = td_loss_and_grads(online, o, acts_, y, cfg.huber_delta)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at episode {episode}, step {step} (lr={cfg.learning_rate})")
                opt.step(online.params, grads)
                losses.append(loss)
            if step % cfg.target_sync_steps == 0:
                target = online.copy()
        final_score = env.state.prev_score
        log.append({
            "episode": episode, "steps": ep_steps, "final_score": final_score,
            "epsilon": eps, "loss_mean": float(np.mean(losses)) if losses else float("nan"),
        })
        if episode % cfg.eval_every == 0 or episode == cfg.episodes_max:
            plan, s, _ = greedy_rollout(online, env)
            if s > best_score:
                best_score, best_plan, best_policy = s, plan, online.copy()
        if progress is not None:
            progress(log[-1])
    return TrainResult(best_policy, best_score, best_plan, log, cfg)


def write_log(log: list[dict], path):
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in log:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in LOG_COLUMNS) + "\n")


def evaluate_policy(policy: QNetwork, env: PlacementEnv, initial: ChargingPlan | None = None):
    """Greedy episode with ``policy``; returns (terminal plan, PlanMetrics)."""
    from .report import evaluate_metrics

    plan, _, _ = greedy_rollout(policy, env, initial)
    return plan, evaluate_metrics(plan, env.network, env.params, budget_spent=env.state.spent)


def config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden_layers"] = list(cfg.hidden_layers)
    return d
