"""Dominance primitives and the constant-policy reference front.

Reward vectors are maximized componentwise.  The reference front enumerates
every constant intervention policy on the discrete action grid (11 levels
per unmasked channel, 1,331 policies for a full 3-channel scenario),
evaluates each over the episode horizon, and keeps the non-dominated
subset with the generating policy attached.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import N_LEVELS, ScenarioSpec, rollout_batch

__all__ = [
    "FrontPoint",
    "dominates",
    "non_dominated_mask",
    "non_dominated_filter",
    "policy_grid",
    "crowding_distance",
    "reference_front",
    "front_to_json",
    "front_from_json",
    "front_to_csv",
]


@dataclass(frozen=True)
class FrontPoint:
    """A candidate front member: a return vector plus its provenance."""

    vector: tuple[float, ...]
    provenance: dict | None = None

    def __post_init__(self):
        vec = tuple(float(v) for v in self.vector)
        if not all(np.isfinite(vec)):
            raise ValueError("front points must have finite components")
        object.__setattr__(self, "vector", vec)

    def as_array(self) -> np.ndarray:
        return np.array(self.vector, dtype=float)


def dominates(u, v) -> bool:
    """True iff u >= v componentwise with strict improvement somewhere."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return bool(np.all(u >= v) and np.any(u > v))


def non_dominated_mask(vectors: np.ndarray) -> np.ndarray:
    """Boolean mask of non-dominated rows; duplicate rows keep their first copy."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2:
        raise ValueError("expected a 2-D array of return vectors")
    n = len(vectors)
    mask = np.ones(n, dtype=bool)
    for idx in range(n):
        if not mask[idx]:
            continue
        v = vectors[idx]
        ge = np.all(vectors >= v, axis=1)
        gt = np.any(vectors > v, axis=1)
        if np.any(ge & gt):
            mask[idx] = False
            continue
        dup = np.all(vectors == v, axis=1)
        first = np.argmax(dup)
        if first != idx:
            mask[idx] = False
    return mask


def non_dominated_filter(points):
    """Non-dominated subset of FrontPoints or raw vectors (duplicates kept once)."""
    if len(points) == 0:
        return type(points)() if isinstance(points, list) else points
    if isinstance(points[0], FrontPoint):
        vectors = np.array([p.as_array() for p in points])
        mask = non_dominated_mask(vectors)
        return [p for p, keep in zip(points, mask) if keep]
    vectors = np.asarray(points, dtype=float)
    return vectors[non_dominated_mask(vectors)]


def crowding_distance(front: np.ndarray) -> np.ndarray:
    """Per-point crowding distances over one front (boundary points infinite).

    For each objective the points are sorted, boundary points get infinity,
    and interior points accumulate the neighbour gap normalized by the
    objective's range (zero-range objectives contribute nothing).
    """
    front = np.asarray(front, dtype=float)
    if front.ndim != 2:
        raise ValueError("expected a 2-D array of return vectors")
    n, n_obj = front.shape
    distances = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for m in range(n_obj):
        order = np.argsort(front[:, m], kind="stable")
        values = front[order, m]
        span = values[-1] - values[0]
        distances[order[0]] = np.inf
        distances[order[-1]] = np.inf
        if span > 0:
            gaps = (values[2:] - values[:-2]) / span
            interior = order[1:-1]
            finite = np.isfinite(distances[interior])
            distances[interior[finite]] += gaps[finite]
    return distances


def policy_grid(spec: ScenarioSpec, levels_per_channel: int) -> np.ndarray:
    axes = [range(levels_per_channel) if allowed else (0,)
            for allowed in spec.action_mask]
    return np.array(list(product(*axes)), dtype=int)


def reference_front(
    spec: ScenarioSpec,
    deterministic: bool = True,
    n_seeds: int = 5,
    seed: int = 0,
    levels_per_channel: int = N_LEVELS,
) -> list[FrontPoint]:
    """Brute-force front over constant policies for one scenario.

    In deterministic mode the diffusion coefficients are zeroed and each
    policy is evaluated once; otherwise each policy's return is the mean
    over ``n_seeds`` fixed-seed episodes.  The non-dominated subset is
    returned with the generating (c, v, q) levels as provenance.
    """
    policies = policy_grid(spec, levels_per_channel)
    run_spec = spec.deterministic() if deterministic else spec
    reps = 1 if deterministic else n_seeds
    tiled = np.repeat(policies, reps, axis=0)

    def actions_fn(day, obs):
        return tiled

    result = rollout_batch(run_spec, len(tiled), actions_fn, seed=seed)
    returns = result.returns.reshape(len(policies), reps, 3).mean(axis=1)

    points = [
        FrontPoint(
            vector=tuple(returns[k]),
            provenance={"policy": {"c": int(p[0]), "v": int(p[1]), "q": int(p[2])},
                        "deterministic": deterministic},
        )
        for k, p in enumerate(policies)
    ]
    return non_dominated_filter(points)


def front_to_json(front: Sequence[FrontPoint], path: str | Path | None = None):
    """Serialize a front as a JSON array of {return, policy} records."""
    payload = []
    for p in front:
        entry = {"return": list(p.vector)}
        if p.provenance:
            entry.update(p.provenance)
        payload.append(entry)
    if path is not None:
        Path(path).write_text(json.dumps(payload, indent=2))
    return payload


def front_from_json(source) -> list[FrontPoint]:
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text())
    return [
        FrontPoint(vector=tuple(entry["return"]),
                   provenance={k: v for k, v in entry.items() if k != "return"})
        for entry in source
    ]


def front_to_csv(front: Sequence[FrontPoint], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r1", "r2", "r3", "a_c", "a_v", "a_q"])
        for p in front:
            policy = (p.provenance or {}).get("policy", {})
            writer.writerow(list(p.vector) + [policy.get("c", ""), policy.get("v", ""), policy.get("q", "")])
    return path
