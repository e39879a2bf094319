"""Stochastic compartmental epidemic simulator with intervention levers.

The population is split into five compartments: susceptible (S), healthy
protected (H, vaccinated or recovered), infected (I), quarantined (Q) and
deceased (D).  Counts are real-valued "simulated individuals"; in national
scenarios one simulated individual stands for ``population_scale`` real
people (default 1,000).

Dynamics are a system of coupled SDEs integrated with explicit
Euler-Maruyama.  With N = S+H+I+Q the living population and
II = I/N the infectious fraction, the per-day drift terms are::

    dS = omega*N - sigma*mu*S*II - (a + beta)*S
    dH = beta*S + phi*I + phi*Q - delta*mu*H*II - a*H
    dI = sigma*mu*S*II + delta*mu*H*II - (a + nu + phi + rho)*I
    dQ = rho*I - (a + nu + phi)*Q
    dD = nu*I + nu*Q

Each compartment additionally receives multiplicative Gaussian noise
``w * x * sqrt(dt) * z`` with z ~ N(0, 1), drawn from an independent
counter-based stream per compartment.  Compartments are clamped at zero
after every substep and D is forced non-decreasing.

Three intervention channels modulate the effective rates: vaccination
scales beta, quarantine scales rho, and closures divide the daily contact
rate mu.  Discrete levels 0..10 per channel map to rates linearly
(closures via ``mu0 / (1 + closure_factor * level)``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

try:
    import tomllib  # py>=3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "COMPARTMENT_NAMES",
    "Compartments",
    "DiseaseProfile",
    "InterventionLevels",
    "EffectiveRates",
    "SimConfig",
    "Trajectory",
    "DegenerateStateError",
    "NoiseChannels",
    "effective_rates",
    "infectious_fraction",
    "drift",
    "step",
    "simulate",
    "simulate_batch",
    "advance_day_batch",
    "load_profile",
    "load_sim_config",
    "death_rate_from_cfr",
]

COMPARTMENT_NAMES = ("s", "h", "i", "q", "d")
_S, _H, _I, _Q, _D = range(5)


class DegenerateStateError(ValueError):
    """Raised when the living population is empty and dynamics are undefined."""


@dataclass(frozen=True)
class Compartments:
    """Population counts at one instant (simulated individuals)."""

    s: float
    h: float
    i: float
    q: float
    d: float

    def __post_init__(self):
        for name in COMPARTMENT_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"compartment {name!r} must be finite and >= 0, got {value}")

    @property
    def living(self) -> float:
        return self.s + self.h + self.i + self.q

    @property
    def total(self) -> float:
        return self.living + self.d

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.h, self.i, self.q, self.d], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Compartments":
        s, h, i, q, d = (float(v) for v in values)
        return cls(s, h, i, q, d)


@dataclass(frozen=True)
class DiseaseProfile:
    """Epidemiological rate constants plus per-compartment diffusion coefficients.

    All rates are per day.  ``mu0`` is the baseline daily interaction count;
    ``beta_unit``/``rho_unit`` are the per-action-level vaccination and
    quarantine rates, and ``closure_factor`` is the per-level increment of
    the contact divisor.
    """

    omega: float = 0.000047
    sigma: float = 0.020
    a: float = 0.000018
    delta: float = 0.005
    nu: float = 0.0014
    phi: float = 0.14
    mu0: float = 10.0
    beta_unit: float = 0.0005
    rho_unit: float = 0.01
    closure_factor: float = 0.2
    w: tuple[float, float, float, float, float] = (0.05, 0.05, 0.05, 0.05, 0.05)

    def __post_init__(self):
        for name in ("omega", "sigma", "a", "delta", "nu", "phi", "beta_unit", "rho_unit", "closure_factor"):
            if getattr(self, name) < 0:
                raise ValueError(f"rate {name!r} must be >= 0")
        if self.delta > self.sigma:
            raise ValueError("protected transmission rate delta must not exceed sigma")
        if self.mu0 <= 0:
            raise ValueError("baseline contact rate mu0 must be positive")
        if len(self.w) != 5 or any(x < 0 for x in self.w):
            raise ValueError("w must hold five non-negative diffusion coefficients")
        object.__setattr__(self, "w", tuple(float(x) for x in self.w))

    def deterministic(self) -> "DiseaseProfile":
        """Copy with zero diffusion (drift-only mode)."""
        return replace(self, w=(0.0,) * 5)

    def with_diffusion(self, w: float) -> "DiseaseProfile":
        return replace(self, w=(float(w),) * 5)


@dataclass(frozen=True)
class InterventionLevels:
    """Discrete policy levels for closure, vaccination and quarantine."""

    closure: int = 0
    vaccination: int = 0
    quarantine: int = 0

    def __post_init__(self):
        for name in ("closure", "vaccination", "quarantine"):
            level = getattr(self, name)
            if not isinstance(level, (int, np.integer)) or not 0 <= level <= 10:
                raise ValueError(f"{name} level must be an integer in [0, 10], got {level!r}")
            object.__setattr__(self, name, int(level))

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.closure, self.vaccination, self.quarantine)


@dataclass(frozen=True)
class EffectiveRates:
    """Rate constants after applying a set of intervention levels."""

    beta: float
    rho: float
    mu: float
    omega: float
    sigma: float
    a: float
    delta: float
    nu: float
    phi: float
    w: tuple[float, float, float, float, float]


@dataclass(frozen=True)
class SimConfig:
    """Integration grid and scaling for one simulation."""

    dt: float = 0.01
    steps_per_day: int = 100
    horizon_days: int = 50
    population_scale: float = 1000.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.steps_per_day < 1:
            raise ValueError("dt must be positive and steps_per_day >= 1")
        if abs(self.dt * self.steps_per_day - 1.0) > 1e-9:
            raise ValueError("dt * steps_per_day must equal exactly one day")
        if self.horizon_days < 0:
            raise ValueError("horizon_days must be >= 0")

    @property
    def total_substeps(self) -> int:
        return self.horizon_days * self.steps_per_day


@dataclass
class Trajectory:
    """Per-day record of one simulated episode.

    ``days`` runs 1..horizon; row k describes the state at the end of day
    ``days[k]`` and the flows accumulated during that day.  Rewards default
    to (-new_infections, -new_deaths, 0); the environment layer fills the
    economic component.
    """

    initial: Compartments
    days: np.ndarray
    compartments: np.ndarray          # (horizon, 5)
    new_infections: np.ndarray        # (horizon,)
    new_deaths: np.ndarray            # (horizon,)
    actions: np.ndarray               # (horizon, 3) int
    rewards: np.ndarray               # (horizon, 3)
    substep_compartments: np.ndarray | None = None  # (horizon*steps_per_day, 5)

    def __len__(self) -> int:
        return len(self.days)

    def to_rows(self) -> list[dict]:
        rows = []
        for k in range(len(self.days)):
            s, h, i, q, d = self.compartments[k]
            rows.append(
                {
                    "day": int(self.days[k]),
                    "s": s, "h": h, "i": i, "q": q, "d": d,
                    "new_infections": self.new_infections[k],
                    "new_deaths": self.new_deaths[k],
                    "a_c": int(self.actions[k, 0]),
                    "a_v": int(self.actions[k, 1]),
                    "a_q": int(self.actions[k, 2]),
                    "r1": self.rewards[k, 0],
                    "r2": self.rewards[k, 1],
                    "r3": self.rewards[k, 2],
                }
            )
        return rows

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        rows = self.to_rows()
        fields = ["day", "s", "h", "i", "q", "d", "new_infections", "new_deaths",
                  "a_c", "a_v", "a_q", "r1", "r2", "r3"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
        return path

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        payload = {
            "initial": dict(zip(COMPARTMENT_NAMES, self.initial.as_array().tolist())),
            "days": self.to_rows(),
        }
        path.write_text(json.dumps(payload, indent=2))
        return path


class NoiseChannels:
    """Five independent counter-based noise streams, one per compartment.

    Streams are spawned from a single seed so a (seed, profile, config,
    policy, init) tuple reproduces a trajectory bit-exactly.
    """

    def __init__(self, seed_or_seq: int | np.random.SeedSequence):
        if isinstance(seed_or_seq, np.random.SeedSequence):
            seq = seed_or_seq
        else:
            seq = np.random.SeedSequence(seed_or_seq)
        self.generators = [np.random.Generator(np.random.Philox(child)) for child in seq.spawn(5)]

    def draw(self, shape: tuple[int, ...]) -> np.ndarray:
        """Standard normals of ``shape + (5,)``, channel k from stream k."""
        out = np.empty(shape + (5,), dtype=float)
        for k, gen in enumerate(self.generators):
            out[..., k] = gen.standard_normal(shape)
        return out


def effective_rates(profile: DiseaseProfile, levels: InterventionLevels) -> EffectiveRates:
    """Map discrete intervention levels to effective daily rates.

    Vaccination and quarantine scale linearly with their levels; closures
    divide the contact rate by ``1 + closure_factor * level``.
    """
    return EffectiveRates(
        beta=profile.beta_unit * levels.vaccination,
        rho=profile.rho_unit * levels.quarantine,
        mu=profile.mu0 / (1.0 + profile.closure_factor * levels.closure),
        omega=profile.omega,
        sigma=profile.sigma,
        a=profile.a,
        delta=profile.delta,
        nu=profile.nu,
        phi=profile.phi,
        w=profile.w,
    )


def infectious_fraction(c: Compartments) -> float:
    """Proportion of the living population that is infected and not quarantining."""
    living = c.living
    if living <= 0:
        raise DegenerateStateError("living population is empty")
    return c.i / living


def _drift_arrays(s, h, i, q, r: EffectiveRates):
    """Vectorized drift terms; inputs may be scalars or equal-shape arrays.

    Returns (ds, dh, di, dq, dd, infection_inflow, vaccination_flow).
    """
    living = s + h + i + q
    if np.any(living <= 0):
        raise DegenerateStateError("living population is empty")
    frac = i / living
    s_infections = r.sigma * r.mu * s * frac
    h_infections = r.delta * r.mu * h * frac
    vaccinations = r.beta * s
    ds = r.omega * living - s_infections - (r.a + r.beta) * s
    dh = vaccinations + r.phi * i + r.phi * q - h_infections - r.a * h
    di = s_infections + h_infections - (r.a + r.nu + r.phi + r.rho) * i
    dq = r.rho * i - (r.a + r.nu + r.phi) * q
    dd = r.nu * i + r.nu * q
    return ds, dh, di, dq, dd, s_infections + h_infections, vaccinations


def drift(c: Compartments, r: EffectiveRates) -> np.ndarray:
    """Per-day deterministic rate of change, ordered (S, H, I, Q, D)."""
    ds, dh, di, dq, dd, _, _ = _drift_arrays(c.s, c.h, c.i, c.q, r)
    return np.array([ds, dh, di, dq, dd], dtype=float)


@dataclass(frozen=True)
class StepFlows:
    """Gross flows of one substep, accumulated from drift terms only."""

    new_infections: float
    new_deaths: float


def _step_arrays(state: np.ndarray, r: EffectiveRates, dt: float, noise: np.ndarray | None):
    """One Euler-Maruyama substep on a (..., 5) state array.

    Returns (next_state, new_infections, new_deaths); flows are per-substep
    drift quantities, computed before clamping so accounting survives any
    clamp events.  D is clamped non-decreasing.
    """
    s, h, i, q, d = (state[..., k] for k in range(5))
    ds, dh, di, dq, dd, inf_inflow, _ = _drift_arrays(s, h, i, q, r)
    drift_terms = np.stack([ds, dh, di, dq, dd], axis=-1)
    nxt = state + drift_terms * dt
    if noise is not None:
        w = np.asarray(r.w, dtype=float)
        nxt = nxt + w * state * np.sqrt(dt) * noise
    nxt = np.maximum(nxt, 0.0)
    nxt[..., _D] = np.maximum(nxt[..., _D], state[..., _D])
    new_infections = inf_inflow * dt
    new_deaths = r.nu * (i + q) * dt
    return nxt, new_infections, new_deaths


def step(
    c: Compartments,
    r: EffectiveRates,
    cfg: SimConfig,
    rng: NoiseChannels | None,
) -> tuple[Compartments, StepFlows]:
    """Advance one substep of length ``cfg.dt``.

    ``rng`` supplies the five noise channels; pass None (or use a profile
    with w == 0) for a pure drift step.
    """
    state = c.as_array()
    noise = None
    if rng is not None and any(x > 0 for x in r.w):
        noise = rng.draw(())
    nxt, new_inf, new_dead = _step_arrays(state, r, cfg.dt, noise)
    return Compartments.from_array(nxt), StepFlows(float(new_inf), float(new_dead))


def advance_day_batch(
    state: np.ndarray,
    rates: EffectiveRates,
    cfg: SimConfig,
    noise: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance ``steps_per_day`` substeps on a (..., 5) state under fixed rates.

    ``rates`` fields may be scalars or arrays broadcastable against the batch.
    ``noise`` has shape (steps_per_day, ..., 5) or is None for drift-only.
    Returns (state, day_new_infections, day_new_deaths).
    """
    day_inf = 0.0
    day_dead = 0.0
    for k in range(cfg.steps_per_day):
        state, inf_k, dead_k = _step_arrays(
            state, rates, cfg.dt, noise[k] if noise is not None else None
        )
        day_inf = day_inf + inf_k
        day_dead = day_dead + dead_k
    return state, day_inf, day_dead


PolicyFn = Callable[[int, Compartments], InterventionLevels]


def simulate(
    profile: DiseaseProfile,
    cfg: SimConfig,
    policy: PolicyFn,
    init: Compartments,
    rng: NoiseChannels | None = None,
    record_substeps: bool = False,
    cost_fn: Callable[[InterventionLevels, Compartments], float] | None = None,
) -> Trajectory:
    """Run a full episode, holding each day's intervention levels fixed.

    ``policy(day_index, compartments)`` is called once per day with the
    start-of-day state (day_index runs 0..horizon-1).  Daily flows are the
    sums of substep drift flows.  ``cost_fn`` optionally fills the third
    reward component (per-day economic cost, recorded negated).
    """
    if rng is None:
        rng = NoiseChannels(cfg.rng_seed)
    horizon = cfg.horizon_days
    spd = cfg.steps_per_day
    stochastic = any(x > 0 for x in profile.w)

    comps = np.empty((horizon, 5), dtype=float)
    new_inf = np.zeros(horizon)
    new_dead = np.zeros(horizon)
    actions = np.zeros((horizon, 3), dtype=int)
    rewards = np.zeros((horizon, 3), dtype=float)
    sub = np.empty((horizon * spd, 5), dtype=float) if record_substeps else None

    state = init.as_array()
    for day in range(horizon):
        start = Compartments.from_array(state)
        levels = policy(day, start)
        rates = effective_rates(profile, levels)
        noise = rng.draw((spd,)) if stochastic else None
        day_inf = 0.0
        day_dead = 0.0
        for k in range(spd):
            state, inf_k, dead_k = _step_arrays(
                state, rates, cfg.dt, noise[k] if noise is not None else None
            )
            day_inf += float(inf_k)
            day_dead += float(dead_k)
            if sub is not None:
                sub[day * spd + k] = state
        comps[day] = state
        new_inf[day] = day_inf
        new_dead[day] = day_dead
        actions[day] = levels.as_tuple()
        cost = cost_fn(levels, start) if cost_fn is not None else 0.0
        rewards[day] = (-day_inf, -day_dead, -cost)

    return Trajectory(
        initial=init,
        days=np.arange(1, horizon + 1),
        compartments=comps,
        new_infections=new_inf,
        new_deaths=new_dead,
        actions=actions,
        rewards=rewards,
        substep_compartments=sub,
    )


def simulate_batch(
    profile: DiseaseProfile,
    cfg: SimConfig,
    levels_per_run: Sequence[InterventionLevels] | Sequence[Sequence[InterventionLevels]],
    init: Compartments | np.ndarray,
    seed: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate many runs at once under fixed per-run action schedules.

    ``levels_per_run`` holds either one InterventionLevels per run (constant
    policy) or one per run per day.  Each run owns independent per-channel
    noise streams spawned from ``seed`` (default ``cfg.rng_seed``).

    Returns (compartments (runs, horizon, 5), new_infections (runs, horizon),
    new_deaths (runs, horizon)).
    """
    n_runs = len(levels_per_run)
    per_day = not isinstance(levels_per_run[0], InterventionLevels)
    horizon, spd = cfg.horizon_days, cfg.steps_per_day
    stochastic = any(x > 0 for x in profile.w)

    if isinstance(init, Compartments):
        state = np.tile(init.as_array(), (n_runs, 1))
    else:
        state = np.array(init, dtype=float).reshape(n_runs, 5).copy()

    channels = None
    if stochastic:
        root = np.random.SeedSequence(cfg.rng_seed if seed is None else seed)
        channels = [NoiseChannels(child) for child in root.spawn(n_runs)]

    def day_rates(day: int) -> list[EffectiveRates]:
        todays = [lv[day] if per_day else lv for lv in levels_per_run]
        return [effective_rates(profile, lv) for lv in todays]

    comps = np.empty((n_runs, horizon, 5), dtype=float)
    new_inf = np.zeros((n_runs, horizon))
    new_dead = np.zeros((n_runs, horizon))

    for day in range(horizon):
        rates = day_rates(day)
        beta = np.array([r.beta for r in rates])
        rho = np.array([r.rho for r in rates])
        mu = np.array([r.mu for r in rates])
        merged = EffectiveRates(
            beta=beta, rho=rho, mu=mu,
            omega=profile.omega, sigma=profile.sigma, a=profile.a,
            delta=profile.delta, nu=profile.nu, phi=profile.phi, w=profile.w,
        )
        noise = None
        if stochastic:
            noise = np.empty((spd, n_runs, 5))
            for run, ch in enumerate(channels):
                noise[:, run, :] = ch.draw((spd,))
        state, day_inf, day_dead = advance_day_batch(state, merged, cfg, noise)
        new_inf[:, day] = day_inf
        new_dead[:, day] = day_dead
        comps[:, day] = state

    return comps, new_inf, new_dead


def death_rate_from_cfr(cfr: float, recovery_rate: float) -> float:
    """Daily disease death rate giving a target case fatality ratio.

    With exit rates nu (death) and phi (recovery), the fatality ratio is
    nu / (nu + phi); inverting gives nu = cfr * phi / (1 - cfr).
    """
    if not 0 <= cfr < 1:
        raise ValueError("case fatality ratio must lie in [0, 1)")
    return cfr * recovery_rate / (1.0 - cfr)


def _read_structured(path: str | Path) -> dict:
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    return json.loads(path.read_text())


def load_profile(path: str | Path) -> DiseaseProfile:
    """Read a DiseaseProfile from a TOML or JSON file (``[profile]`` table or flat)."""
    data = _read_structured(path)
    data = data.get("profile", data)
    if "w" in data and isinstance(data["w"], list):
        data["w"] = tuple(data["w"])
    return DiseaseProfile(**data)


def load_sim_config(path: str | Path) -> SimConfig:
    """Read a SimConfig from a TOML or JSON file (``[sim]`` table or flat)."""
    data = _read_structured(path)
    data = data.get("sim", data)
    return SimConfig(**data)
