"""Episodic multi-objective intervention environment.

Wraps the SDE simulator as a 50-day decision problem: one discrete
3-channel action per simulated day, a 3-dimensional reward vector
(-new infections, -new deaths, -economic cost), and scenario presets
covering national COVID baselines, denser hubs, other pathogens, and
under-vaccinated measles communities.

The daily economic cost of an action is::

    cost = a_c + 5 * a_q * I / N

with I the infected count and N the living population at the start of
the day: closures burden everyone, quarantine burdens in proportion to
how many people must isolate, and the two are equal when 20% of the
population is infected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib.resources import files
from pathlib import Path

import numpy as np

from .sde import (
    Compartments,
    DegenerateStateError,
    DiseaseProfile,
    EffectiveRates,
    InterventionLevels,
    NoiseChannels,
    SimConfig,
    advance_day_batch,
    effective_rates,
)

__all__ = [
    "InitialRule",
    "ScenarioSpec",
    "EnvState",
    "EpiEnv",
    "EpisodeDoneError",
    "economic_cost",
    "episode_return",
    "rollout_batch",
    "BatchRolloutResult",
    "load_scenario",
    "list_scenarios",
    "ACTION_CHANNELS",
    "N_LEVELS",
]

ACTION_CHANNELS = ("closure", "vaccination", "quarantine")
N_LEVELS = 11
OBS_DIM = 6  # five normalized compartments + normalized day index


class EpisodeDoneError(RuntimeError):
    """Raised when stepping an episode past its horizon."""


@dataclass(frozen=True)
class InitialRule:
    """How the initially infected count is drawn at reset."""

    kind: str = "fixed"          # "fixed" | "uniform"
    infected: float = 1000.0     # fixed count
    low: int = 1                 # uniform bounds, inclusive
    high: int = 20

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform"):
            raise ValueError(f"unknown initial rule kind {self.kind!r}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "fixed":
            return float(self.infected)
        return float(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to instantiate one intervention scenario."""

    name: str
    profile: DiseaseProfile
    sim: SimConfig
    population: float
    initial: InitialRule
    coverage: float = 0.0
    action_mask: tuple[bool, bool, bool] = (True, True, True)
    description: str = ""

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")
        if self.population <= 0:
            raise ValueError("population must be positive")

    def deterministic(self) -> "ScenarioSpec":
        return replace(self, profile=self.profile.deterministic())

    def with_initial_fixed(self, infected: float) -> "ScenarioSpec":
        return replace(self, initial=InitialRule(kind="fixed", infected=infected))

    def with_initial_uniform(self, low: int, high: int) -> "ScenarioSpec":
        return replace(self, initial=InitialRule(kind="uniform", low=low, high=high))

    def with_mu(self, mu0: float) -> "ScenarioSpec":
        return replace(self, profile=replace(self.profile, mu0=mu0))

    def initial_compartments(self, rng: np.random.Generator) -> Compartments:
        infected = self.initial.sample(rng)
        protected = self.coverage * self.population
        susceptible = self.population - infected - protected
        if susceptible < 0:
            raise ValueError("initial infected plus coverage exceeds the population")
        return Compartments(susceptible, protected, infected, 0.0, 0.0)

    def mask_action(self, levels: InterventionLevels) -> InterventionLevels:
        masked = tuple(
            lvl if allowed else 0
            for lvl, allowed in zip(levels.as_tuple(), self.action_mask)
        )
        return InterventionLevels(*masked)


@dataclass(frozen=True)
class EnvState:
    """Observation handle: compartment snapshot plus day index."""

    compartments: Compartments
    day: int
    spec: ScenarioSpec

    @property
    def done(self) -> bool:
        return self.day >= self.spec.sim.horizon_days

    def observation(self) -> np.ndarray:
        scale = self.spec.population
        c = self.compartments
        return np.array(
            [c.s / scale, c.h / scale, c.i / scale, c.q / scale, c.d / scale,
             self.day / max(1, self.spec.sim.horizon_days)],
            dtype=float,
        )


def economic_cost(action: InterventionLevels, comp: Compartments) -> float:
    """Daily economic impact of an action at a given population state."""
    living = comp.living
    if living <= 0:
        raise DegenerateStateError("living population is empty")
    return action.closure + 5.0 * action.quarantine * (comp.i / living)


def episode_return(trajectory) -> np.ndarray:
    """Componentwise sum of per-day reward vectors.

    Accepts a Trajectory or any (T, 3) array-like of rewards.
    """
    rewards = getattr(trajectory, "rewards", trajectory)
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        return np.zeros(3)
    return rewards.reshape(-1, 3).sum(axis=0)


class EpiEnv:
    """Single-instance environment with a reset/step API and 3-vector rewards.

    Episodes are reproducible: the constructor seed (default the scenario's
    ``rng_seed``) drives a deterministic sequence of per-episode streams, and
    ``reset(seed=...)`` pins one episode exactly.
    """

    reward_dim = 3

    def __init__(self, spec: ScenarioSpec, seed: int | None = None):
        self.spec = spec
        self._root_seed = spec.sim.rng_seed if seed is None else seed
        self._episode_counter = 0
        self._state: EnvState | None = None
        self._channels: NoiseChannels | None = None
        self._array_state: np.ndarray | None = None

    def reset(self, seed: int | None = None) -> EnvState:
        if seed is None:
            seq = np.random.SeedSequence(entropy=self._root_seed,
                                         spawn_key=(self._episode_counter,))
            self._episode_counter += 1
        else:
            seq = np.random.SeedSequence(seed)
        init_seq, noise_seq = seq.spawn(2)
        init_rng = np.random.Generator(np.random.Philox(init_seq))
        comps = self.spec.initial_compartments(init_rng)
        self._channels = NoiseChannels(noise_seq)
        self._array_state = comps.as_array()
        self._state = EnvState(comps, 0, self.spec)
        return self._state

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise RuntimeError("environment must be reset before use")
        return self._state

    def step(self, action: InterventionLevels | tuple[int, int, int]):
        """Advance one day; returns (state, reward, done, info).

        Masked channels are coerced to level 0 and the info dict reports the
        effective (post-masking) action actually applied.
        """
        state = self.state
        if state.done:
            raise EpisodeDoneError(f"episode finished at day {state.day}")
        if not isinstance(action, InterventionLevels):
            action = InterventionLevels(*action)
        effective = self.spec.mask_action(action)
        start = state.compartments
        cost = economic_cost(effective, start)
        rates = effective_rates(self.spec.profile, effective)
        stochastic = any(x > 0 for x in self.spec.profile.w)
        cfg = self.spec.sim
        noise = self._channels.draw((cfg.steps_per_day,))[:, None, :] if stochastic else None
        arr, day_inf, day_dead = advance_day_batch(
            self._array_state[None, :], rates, cfg, noise
        )
        self._array_state = arr[0]
        reward = np.array([-float(day_inf[0]), -float(day_dead[0]), -cost])
        self._state = EnvState(Compartments.from_array(self._array_state),
                               state.day + 1, self.spec)
        info = {
            "action": effective,
            "new_infections": float(day_inf[0]),
            "new_deaths": float(day_dead[0]),
            "economic_cost": cost,
        }
        return self._state, reward, self._state.done, info


@dataclass
class BatchRolloutResult:
    """Per-episode records from a vectorized rollout."""

    observations: np.ndarray    # (n, horizon, OBS_DIM) start-of-day observations
    actions: np.ndarray         # (n, horizon, 3) effective actions
    rewards: np.ndarray         # (n, horizon, 3)
    returns: np.ndarray         # (n, 3)
    compartments: np.ndarray    # (n, horizon, 5) end-of-day states
    initial: np.ndarray         # (n, 5)

    def __len__(self) -> int:
        return self.returns.shape[0]


def rollout_batch(
    spec: ScenarioSpec,
    n_episodes: int,
    actions_fn,
    seed: int | None = None,
    on_day_end=None,
) -> BatchRolloutResult:
    """Run ``n_episodes`` episodes in lockstep under a shared action callback.

    ``actions_fn(day, observations)`` receives the (n, OBS_DIM) start-of-day
    observations and returns an (n, 3) integer action array; masked channels
    are coerced to zero before being applied or recorded.  Every episode owns
    independent initialization and noise streams spawned from ``seed``.
    ``on_day_end(day, rewards)`` is invoked after each day with the (n, 3)
    reward block, for callers tracking running returns.
    """
    cfg = spec.sim
    horizon = cfg.horizon_days
    root = np.random.SeedSequence(cfg.rng_seed if seed is None else seed)
    episode_seqs = root.spawn(n_episodes)
    init_rngs = []
    channels = []
    for seq in episode_seqs:
        init_seq, noise_seq = seq.spawn(2)
        init_rngs.append(np.random.Generator(np.random.Philox(init_seq)))
        channels.append(NoiseChannels(noise_seq))

    state = np.stack([spec.initial_compartments(rng).as_array() for rng in init_rngs])
    initial = state.copy()
    stochastic = any(x > 0 for x in spec.profile.w)
    mask = np.array(spec.action_mask, dtype=bool)
    scale = spec.population

    observations = np.empty((n_episodes, horizon, OBS_DIM))
    actions = np.empty((n_episodes, horizon, 3), dtype=int)
    rewards = np.empty((n_episodes, horizon, 3))
    comps = np.empty((n_episodes, horizon, 5))

    for day in range(horizon):
        obs = np.empty((n_episodes, OBS_DIM))
        obs[:, :5] = state / scale
        obs[:, 5] = day / max(1, horizon)
        acts = np.asarray(actions_fn(day, obs), dtype=int)
        if acts.shape != (n_episodes, 3):
            raise ValueError(f"actions_fn must return shape {(n_episodes, 3)}, got {acts.shape}")
        acts = np.clip(acts, 0, N_LEVELS - 1)
        acts[:, ~mask] = 0

        living = state[:, :4].sum(axis=1)
        if np.any(living <= 0):
            raise DegenerateStateError("living population is empty")
        cost = acts[:, 0] + 5.0 * acts[:, 2] * state[:, 2] / living

        rates = EffectiveRates(
            beta=spec.profile.beta_unit * acts[:, 1],
            rho=spec.profile.rho_unit * acts[:, 2],
            mu=spec.profile.mu0 / (1.0 + spec.profile.closure_factor * acts[:, 0]),
            omega=spec.profile.omega, sigma=spec.profile.sigma, a=spec.profile.a,
            delta=spec.profile.delta, nu=spec.profile.nu, phi=spec.profile.phi,
            w=spec.profile.w,
        )
        noise = None
        if stochastic:
            noise = np.empty((cfg.steps_per_day, n_episodes, 5))
            for run, ch in enumerate(channels):
                noise[:, run, :] = ch.draw((cfg.steps_per_day,))
        state, day_inf, day_dead = advance_day_batch(state, rates, cfg, noise)

        observations[:, day] = obs
        actions[:, day] = acts
        rewards[:, day, 0] = -day_inf
        rewards[:, day, 1] = -day_dead
        rewards[:, day, 2] = -cost
        comps[:, day] = state
        if on_day_end is not None:
            on_day_end(day, rewards[:, day])

    return BatchRolloutResult(
        observations=observations,
        actions=actions,
        rewards=rewards,
        returns=rewards.sum(axis=1),
        compartments=comps,
        initial=initial,
    )


def _spec_from_dict(data: dict) -> ScenarioSpec:
    profile = dict(data["profile"])
    if isinstance(profile.get("w"), list):
        profile["w"] = tuple(profile["w"])
    init = data["initial"]
    rule = InitialRule(
        kind=init.get("kind", "fixed"),
        infected=init.get("infected", 1000.0),
        low=init.get("low", 1),
        high=init.get("high", 20),
    )
    mask = data.get("action_mask", {})
    if isinstance(mask, dict):
        mask = tuple(bool(mask.get(ch, True)) for ch in ACTION_CHANNELS)
    else:
        mask = tuple(bool(x) for x in mask)
    return ScenarioSpec(
        name=data["name"],
        profile=DiseaseProfile(**profile),
        sim=SimConfig(**data["sim"]),
        population=float(data["population"]),
        initial=rule,
        coverage=float(data.get("coverage", 0.0)),
        action_mask=mask,
        description=data.get("description", ""),
    )


def load_scenario(name: str, preset_dir: str | Path | None = None) -> ScenarioSpec:
    """Load a named scenario preset (packaged, or from ``preset_dir``)."""
    if preset_dir is not None:
        path = Path(preset_dir) / f"{name}.json"
        if not path.exists():
            raise KeyError(f"no scenario preset named {name!r} in {preset_dir}")
        return _spec_from_dict(json.loads(path.read_text()))
    resource = files("epiworkbench") / "presets" / f"{name}.json"
    if not resource.is_file():
        raise KeyError(f"no scenario preset named {name!r}")
    return _spec_from_dict(json.loads(resource.read_text()))


def list_scenarios() -> list[str]:
    resource = files("epiworkbench") / "presets"
    names = []
    for entry in resource.iterdir():
        if not entry.name.endswith(".json"):
            continue
        payload = json.loads(entry.read_text())
        if "profile" in payload:  # skip non-scenario data files
            names.append(entry.name[:-5])
    return sorted(names)
