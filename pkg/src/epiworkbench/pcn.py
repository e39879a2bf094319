"""Pareto-conditioned policy network.

A single multilayer perceptron maps (normalized observation, scaled desired
return vector, scaled desired horizon) to three independent 11-way action
heads.  Training is supervised: collected episodes are relabeled with their
own return-to-go and horizon-to-go at every step, the buffer is pruned by
non-domination rank and crowding distance, and new exploration commands are
drawn from the buffer's non-dominated episodes with one objective inflated
by noise.

The network, backpropagation and the momentum optimizer are implemented
directly in numpy to keep the gradients auditable; a finite-difference
check covers them in the test suite.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import OBS_DIM, ScenarioSpec, rollout_batch
from .pareto import FrontPoint, crowding_distance, non_dominated_filter, non_dominated_mask, reference_front
from .sde import InterventionLevels

__all__ = [
    "Mlp",
    "SgdMomentum",
    "EpisodeRecord",
    "Command",
    "TrainConfig",
    "Pcn",
    "TrainResult",
    "mlp_forward",
    "mlp_backward",
    "select_command",
    "act",
    "prune_buffer",
    "train",
    "evaluate_front",
    "greedy_rollouts",
    "priority_command",
    "save_checkpoint",
    "load_checkpoint",
]

N_HEADS = 3
N_LEVELS = 11
CHECKPOINT_VERSION = 1


class Mlp:
    """Two-hidden-layer ReLU network with three 11-way output heads."""

    def __init__(self, input_dim: int, hidden: tuple[int, int] = (64, 64), seed: int = 0):
        rng = np.random.default_rng(seed)
        h1, h2 = hidden
        out = N_HEADS * N_LEVELS
        self.input_dim = input_dim
        self.hidden = (h1, h2)
        self.params = {
            "W1": rng.normal(0, np.sqrt(2.0 / input_dim), (input_dim, h1)),
            "b1": np.zeros(h1),
            "W2": rng.normal(0, np.sqrt(2.0 / h1), (h1, h2)),
            "b2": np.zeros(h2),
            "W3": rng.normal(0, np.sqrt(2.0 / h2), (h2, out)),
            "b3": np.zeros(out),
        }

    def forward(self, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
        """Logits of shape (batch, 3, 11) for inputs of shape (batch, input_dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[1]}")
        p = self.params
        z1 = x @ p["W1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ p["W2"] + p["b2"]
        a2 = np.maximum(z2, 0.0)
        logits = a2 @ p["W3"] + p["b3"]
        if cache is not None:
            cache.update(x=x, z1=z1, a1=a1, z2=z2, a2=a2)
        return logits.reshape(-1, N_HEADS, N_LEVELS)


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mlp_backward(net: Mlp, inputs: np.ndarray, labels: np.ndarray):
    """Loss and exact gradients for a labeled batch.

    The loss is the sum over batch rows and action heads of the cross-entropy
    between each head's softmax and its integer label (sum reduction, so a
    duplicated batch doubles every gradient).  Returns (loss, grads).
    """
    labels = np.asarray(labels, dtype=int)
    cache: dict = {}
    logits = net.forward(inputs, cache)
    batch = logits.shape[0]
    if labels.shape != (batch, N_HEADS):
        raise ValueError(f"labels must have shape {(batch, N_HEADS)}")
    probs = _softmax(logits)
    rows = np.arange(batch)[:, None]
    heads = np.arange(N_HEADS)[None, :]
    picked = probs[rows, heads, labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).sum())

    dlogits = probs.copy()
    dlogits[rows, heads, labels] -= 1.0
    dlogits = dlogits.reshape(batch, N_HEADS * N_LEVELS)

    p = net.params
    x, a1, a2, z1, z2 = cache["x"], cache["a1"], cache["a2"], cache["z1"], cache["z2"]
    grads = {}
    grads["W3"] = a2.T @ dlogits
    grads["b3"] = dlogits.sum(axis=0)
    da2 = dlogits @ p["W3"].T
    dz2 = da2 * (z2 > 0)
    grads["W2"] = a1.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ p["W2"].T
    dz1 = da1 * (z1 > 0)
    grads["W1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads


class SgdMomentum:
    """Plain momentum SGD with global gradient-norm clipping."""

    def __init__(self, net: Mlp, learning_rate: float = 1e-3, momentum: float = 0.9,
                 clip_norm: float = 10.0):
        self.net = net
        self.lr = learning_rate
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = {k: np.zeros_like(v) for k, v in net.params.items()}

    def apply(self, grads: dict, batch_size: int) -> None:
        scaled = {k: g / max(1, batch_size) for k, g in grads.items()}
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in scaled.values()))
        if norm > self.clip_norm:
            factor = self.clip_norm / norm
            scaled = {k: g * factor for k, g in scaled.items()}
        for k, v in self.net.params.items():
            self.velocity[k] = self.momentum * self.velocity[k] - self.lr * scaled[k]
            v += self.velocity[k]


@dataclass
class EpisodeRecord:
    """One rollout stored for supervised relabeling."""

    observations: np.ndarray   # (T, OBS_DIM)
    actions: np.ndarray        # (T, 3) int
    rewards: np.ndarray        # (T, 3)

    def __post_init__(self):
        if len(self.observations) != len(self.actions) or len(self.actions) != len(self.rewards):
            raise ValueError("per-step arrays must share their length")

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def episode_return(self) -> np.ndarray:
        return self.rewards.sum(axis=0)

    def returns_to_go(self) -> np.ndarray:
        """rtg[t] = sum of rewards from step t onward; rtg[0] is the return."""
        return np.cumsum(self.rewards[::-1], axis=0)[::-1].copy()

    def horizons_to_go(self) -> np.ndarray:
        return np.arange(len(self), 0, -1, dtype=float)


@dataclass(frozen=True)
class Command:
    """Desired return vector and remaining horizon for conditioning."""

    desired_return: tuple[float, float, float]
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("desired horizon must be >= 1")
        object.__setattr__(self, "desired_return",
                           tuple(float(v) for v in self.desired_return))


@dataclass
class TrainConfig:
    batch_size: int = 256
    buffer_capacity: int = 300
    learning_rate: float = 1e-3
    iterations: int = 30
    episodes_per_iteration: int = 20
    updates_per_iteration: int = 50
    noise: float = 0.1
    seed: int = 0
    hidden: tuple[int, int] = (64, 64)
    momentum: float = 0.9
    clip_norm: float = 10.0
    baseline_seed_episodes: int = 10
    # Oversampling factor for do-nothing anchor episodes in minibatches.
    # Near the end of any episode every return-to-go approaches zero, so the
    # zero-cost corner's labels are otherwise swamped by the (economically
    # free) vaccination behavior that dominates the enumerated front there.
    anchor_weight: float = 8.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class Pcn:
    """Trained policy: network plus the fixed command scaling constants."""

    net: Mlp
    return_scale: np.ndarray   # (3,) multiplies desired returns at the input
    horizon_scale: float

    def command_input(self, obs: np.ndarray, desired: np.ndarray, horizon) -> np.ndarray:
        obs = np.atleast_2d(obs)
        desired = np.atleast_2d(desired)
        horizon = np.atleast_1d(np.asarray(horizon, dtype=float))
        return np.concatenate(
            [obs, desired * self.return_scale, (horizon * self.horizon_scale)[:, None]],
            axis=1,
        )


def buffer_returns(buffer: list[EpisodeRecord]) -> np.ndarray:
    return np.array([ep.episode_return for ep in buffer])


def select_command(buffer: list[EpisodeRecord], rng: np.random.Generator,
                   noise: float) -> Command:
    """Exploration command: a non-dominated episode's return with one
    objective inflated by ``noise`` buffer standard deviations."""
    if not buffer:
        raise ValueError("cannot select a command from an empty buffer")
    returns = buffer_returns(buffer)
    mask = non_dominated_mask(returns)
    candidates = np.flatnonzero(mask)
    pick = int(candidates[rng.integers(len(candidates))])
    desired = returns[pick].copy()
    if noise > 0:
        objective = int(rng.integers(N_HEADS))
        desired[objective] += noise * returns[:, objective].std()
    return Command(desired_return=tuple(desired), horizon=len(buffer[pick]))


def _sample_heads(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-row, per-head categorical draws from (n, 3, 11) probabilities."""
    n = probs.shape[0]
    cum = probs.cumsum(axis=-1)
    u = rng.random((n, N_HEADS, 1))
    return np.minimum((u > cum).sum(axis=-1), N_LEVELS - 1)


def act(pcn: Pcn, observation: np.ndarray, command: Command,
        rng: np.random.Generator | None = None, greedy: bool = False) -> InterventionLevels:
    """One action from the conditioned policy (argmax when greedy)."""
    x = pcn.command_input(observation, np.asarray(command.desired_return),
                          command.horizon)
    logits = pcn.net.forward(x)
    if greedy:
        levels = logits[0].argmax(axis=-1)
    else:
        if rng is None:
            raise ValueError("sampling requires an rng")
        levels = _sample_heads(_softmax(logits), rng)[0]
    return InterventionLevels(*(int(v) for v in levels))


def _domination_ranks(returns: np.ndarray) -> np.ndarray:
    """Non-domination rank per row (0 = on the first front)."""
    n = len(returns)
    ranks = np.full(n, -1, dtype=int)
    remaining = np.arange(n)
    level = 0
    while len(remaining):
        mask = non_dominated_mask(returns[remaining])
        # duplicates: treat equal vectors as sharing the first copy's rank
        vecs = returns[remaining]
        for idx in np.flatnonzero(~mask):
            if np.any(np.all(vecs[mask] == vecs[idx], axis=1)):
                mask[idx] = True
        ranks[remaining[mask]] = level
        remaining = remaining[~mask]
        level += 1
    return ranks


def prune_buffer(buffer: list[EpisodeRecord], capacity: int) -> list[EpisodeRecord]:
    """Keep at most ``capacity`` episodes, preferring low non-domination rank
    and, within a rank, high crowding distance."""
    if len(buffer) <= capacity:
        return buffer
    returns = buffer_returns(buffer)
    ranks = _domination_ranks(returns)
    crowding = np.zeros(len(buffer))
    for level in np.unique(ranks):
        idx = np.flatnonzero(ranks == level)
        crowding[idx] = crowding_distance(returns[idx])
    order = sorted(range(len(buffer)),
                   key=lambda k: (ranks[k], -crowding[k]))
    keep = sorted(order[:capacity])
    return [buffer[k] for k in keep]


def _scales_from_front(front_returns: np.ndarray, horizon: int) -> tuple[np.ndarray, float]:
    spans = front_returns.max(axis=0) - front_returns.min(axis=0)
    magnitude = np.abs(front_returns).max(axis=0)
    denom = np.maximum(np.maximum(spans, magnitude), 1.0)
    return 1.0 / denom, 1.0 / max(1, horizon)


def _collect_episodes(spec: ScenarioSpec, pcn: Pcn, commands: list[Command],
                      seed: int, rng: np.random.Generator,
                      greedy: bool = False) -> list[EpisodeRecord]:
    """Roll one episode per command, decrementing each command's return-to-go
    by the observed rewards and its horizon-to-go by one day (floored at 1)."""
    n = len(commands)
    desired0 = np.array([c.desired_return for c in commands], dtype=float)
    horizon0 = np.array([c.horizon for c in commands], dtype=float)
    accumulated = np.zeros_like(desired0)

    def actions_fn(day, obs):
        rtg = desired0 - accumulated
        htg = np.maximum(horizon0 - day, 1.0)
        x = pcn.command_input(obs, rtg, htg)
        logits = pcn.net.forward(x)
        if greedy:
            return logits.argmax(axis=-1)
        return _sample_heads(_softmax(logits), rng)

    def on_day_end(day, rewards):
        nonlocal accumulated
        accumulated = accumulated + rewards

    result = rollout_batch(spec, n, actions_fn, seed=seed, on_day_end=on_day_end)
    return [
        EpisodeRecord(observations=result.observations[k],
                      actions=result.actions[k],
                      rewards=result.rewards[k])
        for k in range(n)
    ]


@dataclass
class TrainResult:
    pcn: Pcn
    buffer: list[EpisodeRecord]
    log: list[dict] = field(default_factory=list)

    def write_log(self, path: str | Path) -> Path:
        path = Path(path)
        if self.log:
            with open(path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(self.log[0]))
                writer.writeheader()
                writer.writerows(self.log)
        return path


def train(spec: ScenarioSpec, config: TrainConfig | None = None,
          seed_front: list[FrontPoint] | None = None) -> TrainResult:
    """Train a conditioned policy on one scenario.

    The replay buffer starts from episodes replaying every reference-front
    policy plus a handful of do-nothing baseline episodes (the buffer's
    economic anchor; the enumerated front cannot contain the do-nothing
    policy because cost-free vaccination dominates it).  Each iteration
    collects episodes under exploration commands, prunes the buffer, and
    runs supervised updates on (observation, return-to-go, horizon-to-go)
    -> action minibatches.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    if seed_front is None:
        seed_front = reference_front(spec, deterministic=True, seed=config.seed)

    front_policies = [p.provenance["policy"] for p in seed_front]
    seed_actions = np.array([[p["c"], p["v"], p["q"]] for p in front_policies], dtype=int)
    seed_actions = np.vstack([seed_actions] +
                             [np.zeros((config.baseline_seed_episodes, 3), dtype=int)])

    def seed_fn(day, obs):
        return seed_actions

    seeded = rollout_batch(spec, len(seed_actions), seed_fn, seed=config.seed + 1)
    buffer = [
        EpisodeRecord(observations=seeded.observations[k],
                      actions=seeded.actions[k],
                      rewards=seeded.rewards[k])
        for k in range(len(seed_actions))
    ]

    front_returns = np.array([p.as_array() for p in seed_front])
    return_scale, horizon_scale = _scales_from_front(front_returns, spec.sim.horizon_days)
    net = Mlp(OBS_DIM + N_HEADS + 1, hidden=config.hidden, seed=config.seed)
    pcn = Pcn(net=net, return_scale=return_scale, horizon_scale=horizon_scale)
    optimizer = SgdMomentum(net, learning_rate=config.learning_rate,
                            momentum=config.momentum, clip_norm=config.clip_norm)

    log: list[dict] = []
    for iteration in range(config.iterations):
        commands = [select_command(buffer, rng, config.noise)
                    for _ in range(config.episodes_per_iteration)]
        episodes = _collect_episodes(spec, pcn, commands,
                                     seed=config.seed + 100 + iteration, rng=rng)
        buffer.extend(episodes)
        buffer = prune_buffer(buffer, config.buffer_capacity)

        steps_per_ep = np.array([len(ep) for ep in buffer])
        rtg_cache = [ep.returns_to_go() for ep in buffer]
        weights = np.array([config.anchor_weight if ep.actions.sum() == 0 else 1.0
                            for ep in buffer])
        weights = weights / weights.sum()
        mean_loss = 0.0
        for _ in range(config.updates_per_iteration):
            ep_idx = rng.choice(len(buffer), size=config.batch_size, p=weights)
            step_idx = (rng.random(config.batch_size) * steps_per_ep[ep_idx]).astype(int)
            obs = np.empty((config.batch_size, OBS_DIM))
            rtg = np.empty((config.batch_size, 3))
            htg = np.empty(config.batch_size)
            labels = np.empty((config.batch_size, 3), dtype=int)
            for row, (e, t) in enumerate(zip(ep_idx, step_idx)):
                ep = buffer[e]
                obs[row] = ep.observations[t]
                rtg[row] = rtg_cache[e][t]
                htg[row] = len(ep) - t
                labels[row] = ep.actions[t]
            x = pcn.command_input(obs, rtg, htg)
            loss, grads = mlp_backward(net, x, labels)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at iteration {iteration}: loss={loss}, "
                    f"buffer size {len(buffer)}")
            optimizer.apply(grads, config.batch_size)
            mean_loss += loss / config.batch_size
        mean_loss /= max(1, config.updates_per_iteration)

        returns = buffer_returns(buffer)
        front_size = int(non_dominated_mask(returns).sum())
        entry = {
            "iteration": iteration,
            "loss": mean_loss,
            "buffer_size": len(buffer),
            "buffer_front_size": front_size,
        }
        for j, name in enumerate(("infections", "deaths", "cost")):
            entry[f"return_{name}_min"] = float(returns[:, j].min())
            entry[f"return_{name}_max"] = float(returns[:, j].max())
        log.append(entry)

    return TrainResult(pcn=pcn, buffer=buffer, log=log)


def greedy_rollouts(pcn: Pcn, spec: ScenarioSpec, commands: list[Command],
                    seed: int = 0) -> list[EpisodeRecord]:
    """Deterministic rollouts, one per command (stochastic env, fixed seeds)."""
    rng = np.random.default_rng(seed)
    return _collect_episodes(spec, pcn, commands, seed=seed, rng=rng, greedy=True)


def evaluate_front(pcn: Pcn, commands: list[Command], spec: ScenarioSpec,
                   n_episodes: int = 20, seed: int = 0) -> list[FrontPoint]:
    """Greedy rollouts across commands; the non-dominated returns form the
    approximate front, each tagged with its generating command."""
    cycled = [commands[k % len(commands)] for k in range(n_episodes)]
    episodes = greedy_rollouts(pcn, spec, cycled, seed=seed)
    points = [
        FrontPoint(vector=tuple(ep.episode_return),
                   provenance={"command": {"return": list(c.desired_return),
                                           "horizon": c.horizon}})
        for ep, c in zip(episodes, cycled)
    ]
    return non_dominated_filter(points)


def priority_command(buffer_or_front, horizon: int, priority: str,
                     baseline_return: np.ndarray | None = None) -> Command:
    """Build an evaluation command for a named priority.

    ``infection`` targets the best-infection corner of the given returns,
    ``economic`` targets the do-nothing baseline's return (cost 0 with
    consequences accepted; requires ``baseline_return``), and ``balanced``
    targets the point maximizing the worst normalized objective.
    """
    if priority == "economic":
        if baseline_return is None:
            raise ValueError("economic priority requires the do-nothing baseline return")
        return Command(desired_return=tuple(baseline_return), horizon=horizon)
    if isinstance(buffer_or_front[0], EpisodeRecord):
        returns = buffer_returns(buffer_or_front)
    elif isinstance(buffer_or_front[0], FrontPoint):
        returns = np.array([p.as_array() for p in buffer_or_front])
    else:
        returns = np.asarray(buffer_or_front, dtype=float)
    returns = returns[non_dominated_mask(returns)]
    if priority == "infection":
        pick = int(returns[:, 0].argmax())
    elif priority == "balanced":
        span = returns.max(axis=0) - returns.min(axis=0)
        span[span == 0] = 1.0
        normalized = (returns - returns.min(axis=0)) / span
        pick = int(normalized.min(axis=1).argmax())
    else:
        raise ValueError(f"unknown priority {priority!r}")
    return Command(desired_return=tuple(returns[pick]), horizon=horizon)


def save_checkpoint(result: TrainResult, path: str | Path, scenario: str = "") -> Path:
    """Write the policy as an .npz with a JSON architecture header."""
    path = Path(path)
    pcn = result.pcn
    header = {
        "version": CHECKPOINT_VERSION,
        "input_dim": pcn.net.input_dim,
        "hidden": list(pcn.net.hidden),
        "return_scale": pcn.return_scale.tolist(),
        "horizon_scale": pcn.horizon_scale,
        "scenario": scenario,
        "buffer_returns": buffer_returns(result.buffer).tolist() if result.buffer else [],
        "buffer_horizons": [len(ep) for ep in result.buffer],
    }
    np.savez(path, header=json.dumps(header),
             **{k: v for k, v in pcn.net.params.items()})
    return path


def load_checkpoint(path: str | Path) -> tuple[Pcn, dict]:
    """Load a policy checkpoint; returns (policy, header)."""
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        net = Mlp(header["input_dim"], hidden=tuple(header["hidden"]))
        for key in net.params:
            net.params[key] = data[key]
    pcn = Pcn(net=net, return_scale=np.array(header["return_scale"]),
              horizon_scale=float(header["horizon_scale"]))
    return pcn, header
