"""Desk-scale baseline simulators: a generalized stochastic SIR and a
grid-based agent model.

Both exist to reproduce the comparison results, not to be accurate.  The
GSIR draws new infections from a Poisson distribution and removals from a
Binomial, with a single discrete intervention level scaling its per-contact
infection rate.  The agent model walks people on an integer grid and
transmits on same-cell contact after an incubation period; it saturates its
small population quickly and its initialization cost grows with the squared
grid length, which is the point of the comparison.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GsirParams",
    "GsirState",
    "gsir_step",
    "gsir_simulate",
    "default_gsir_params",
    "calibrate_gsir_beta1",
    "AbmParams",
    "AbmWorld",
    "abm_simulate",
    "measure_init_times",
    "extrapolate_init_time",
    "SUSCEPTIBLE",
    "INCUBATING",
    "INFECTIOUS",
    "RECOVERED",
    "DEAD",
]


# ---------------------------------------------------------------------------
# Generalized SIR


@dataclass(frozen=True)
class GsirParams:
    """Per-level infection rates and the per-step removal probability."""

    beta_by_level: tuple[float, ...]
    zeta: float

    def __post_init__(self):
        betas = tuple(float(b) for b in self.beta_by_level)
        if any(b <= 0 for b in betas):
            raise ValueError("all per-level infection rates must be positive")
        if any(a < b for a, b in zip(betas, betas[1:])):
            raise ValueError("infection rates must decrease with the level")
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError("removal probability must lie in [0, 1]")
        object.__setattr__(self, "beta_by_level", betas)

    @property
    def n_levels(self) -> int:
        return len(self.beta_by_level)

    def beta(self, level: int) -> float:
        if not 1 <= level <= self.n_levels:
            raise ValueError(f"level must lie in 1..{self.n_levels}")
        return self.beta_by_level[level - 1]


def default_gsir_params(beta1: float, zeta: float = 0.1, n_levels: int = 7,
                        decrement: float = 0.15) -> GsirParams:
    """Linearly decreasing per-level rates beta_j = beta1 * (1 - d*(j-1))."""
    betas = tuple(beta1 * (1.0 - decrement * j) for j in range(n_levels))
    return GsirParams(beta_by_level=betas, zeta=zeta)


@dataclass(frozen=True)
class GsirState:
    x_s: int
    x_i: int
    x_r: int

    def __post_init__(self):
        for name in ("x_s", "x_i", "x_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self) -> int:
        return self.x_s + self.x_i + self.x_r


def gsir_step(state: GsirState, level: int, params: GsirParams,
              rng: np.random.Generator) -> tuple[GsirState, int]:
    """One day: Poisson new infections, Binomial removals, closed population.

    Returns (next_state, new_infections).
    """
    m = state.total
    rate = params.beta(level) * state.x_i * state.x_s / m if m else 0.0
    new_infections = min(int(rng.poisson(rate)), state.x_s)
    removals = int(rng.binomial(state.x_i, params.zeta)) if state.x_i else 0
    x_s = state.x_s - new_infections
    x_r = state.x_r + removals
    x_i = m - x_s - x_r
    return GsirState(x_s, x_i, x_r), new_infections


def gsir_simulate(params: GsirParams, levels, horizon: int, init: GsirState,
                  rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Iterate daily steps under a constant or per-day level schedule."""
    if np.isscalar(levels):
        levels = np.full(horizon, int(levels))
    levels = np.asarray(levels, dtype=int)
    series = {key: np.zeros(horizon, dtype=int)
              for key in ("x_s", "x_i", "x_r", "new_infections")}
    state = init
    for day in range(horizon):
        state, new_inf = gsir_step(state, int(levels[day]), params, rng)
        series["x_s"][day] = state.x_s
        series["x_i"][day] = state.x_i
        series["x_r"][day] = state.x_r
        series["new_infections"][day] = new_inf
    return series


def _measured_growth(beta1: float, zeta: float, m: int, x_i0: int,
                     seed: int, runs: int = 5, days: int = 25) -> float:
    """Mean daily log growth of X_I over the early epidemic, across runs."""
    rates = []
    params = default_gsir_params(beta1, zeta=zeta)
    for run in range(runs):
        rng = np.random.default_rng(seed + run)
        series = gsir_simulate(params, 1, days, GsirState(m - x_i0, x_i0, 0), rng)
        x_i = np.concatenate([[x_i0], series["x_i"]]).astype(float)
        valid = (x_i[:-1] > 0) & (x_i[1:] > 0) & (x_i[1:] < m / 10)
        if valid.any():
            rates.append(np.mean(np.log(x_i[1:][valid] / x_i[:-1][valid])))
    return float(np.mean(rates)) if rates else -np.inf


def calibrate_gsir_beta1(target_growth: float, zeta: float = 0.1,
                         m: int = 68_000, x_i0: int = 50, seed: int = 0,
                         tolerance: float = 2e-3) -> float:
    """Bisection on the measured early growth to place the baseline at its
    most favorable: zero-intervention growth matching the target."""
    low, high = zeta * 0.5 + 1e-4, 1.5
    for _ in range(40):
        mid = 0.5 * (low + high)
        growth = _measured_growth(mid, zeta, m, x_i0, seed)
        if abs(growth - target_growth) < tolerance:
            return mid
        if growth < target_growth:
            low = mid
        else:
            high = mid
    return 0.5 * (low + high)


# ---------------------------------------------------------------------------
# Agent-based grid model

SUSCEPTIBLE, INCUBATING, INFECTIOUS, RECOVERED, DEAD = range(5)


@dataclass(frozen=True)
class AbmParams:
    incubation_days: int = 5
    p_infect: float = 0.05        # per infectious cell-mate per day
    recovery_rate: float = 0.14   # daily recovery probability when infectious
    mortality_rate: float = 0.0014  # daily death probability when infectious
    move_radius: int = 2          # cells per axis per day
    vaccination_unit: float = 0.0005  # fraction of susceptibles per level per day


@dataclass
class AbmWorld:
    """Array-backed population on an integer grid (one record per person)."""

    length: int
    params: AbmParams
    x: np.ndarray
    y: np.ndarray
    status: np.ndarray
    incubation: np.ndarray
    vaccinated: np.ndarray
    rng: np.random.Generator
    init_seconds: float = 0.0

    @classmethod
    def build(cls, length: int, density: float, seed: int = 0,
              params: AbmParams | None = None,
              initial_infected: int = 1) -> "AbmWorld":
        """Populate a length x length grid at the given persons-per-cell
        density; construction is timed for the runtime comparison."""
        params = params or AbmParams()
        start = time.perf_counter()
        rng = np.random.default_rng(seed)
        population = int(round(density * length * length))
        if population <= 0:
            raise ValueError("population must be positive")
        x = rng.integers(0, length, population)
        y = rng.integers(0, length, population)
        status = np.full(population, SUSCEPTIBLE, dtype=np.int8)
        incubation = np.zeros(population, dtype=np.int16)
        vaccinated = np.zeros(population, dtype=bool)
        initial_infected = min(initial_infected, population)
        seeds = rng.choice(population, size=initial_infected, replace=False)
        status[seeds] = INFECTIOUS
        elapsed = time.perf_counter() - start
        return cls(length=length, params=params, x=x, y=y, status=status,
                   incubation=incubation, vaccinated=vaccinated, rng=rng,
                   init_seconds=elapsed)

    @property
    def population(self) -> int:
        return len(self.status)

    def counts(self) -> dict[str, int]:
        return {name: int((self.status == code).sum())
                for name, code in (("susceptible", SUSCEPTIBLE),
                                   ("incubating", INCUBATING),
                                   ("infectious", INFECTIOUS),
                                   ("recovered", RECOVERED),
                                   ("dead", DEAD))}


def abm_simulate(world: AbmWorld, interventions, horizon: int) -> dict:
    """Advance the world day by day, returning daily series and phase timings.

    ``interventions`` is a constant (closure, vaccine, health) level triple or
    a per-day array of them.  Closures shrink the movement radius, health
    measures scale down the per-contact infection probability, vaccination
    immunizes susceptibles.  Persons progress susceptible -> incubating ->
    infectious -> recovered or dead, never backwards.
    """
    interventions = np.asarray(interventions, dtype=int)
    if interventions.ndim == 1:
        interventions = np.tile(interventions, (horizon, 1))
    params = world.params
    rng = world.rng
    length = world.length
    new_infections = np.zeros(horizon, dtype=int)
    new_deaths = np.zeros(horizon, dtype=int)
    timings = {"move": 0.0, "infect": 0.0, "progress": 0.0}

    for day in range(horizon):
        closure, vaccine, health = interventions[day]

        t0 = time.perf_counter()
        radius = max(0, int(round(params.move_radius * (1 - 0.1 * closure))))
        mobile = world.status != DEAD
        if radius > 0:
            n_mobile = int(mobile.sum())
            world.x[mobile] = np.clip(
                world.x[mobile] + rng.integers(-radius, radius + 1, n_mobile), 0, length - 1)
            world.y[mobile] = np.clip(
                world.y[mobile] + rng.integers(-radius, radius + 1, n_mobile), 0, length - 1)
        timings["move"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        p_eff = params.p_infect * max(0.2, 1 - 0.08 * health)
        cells = world.x.astype(np.int64) * length + world.y
        infectious_counts = np.bincount(cells[world.status == INFECTIOUS],
                                        minlength=length * length)
        susceptible = (world.status == SUSCEPTIBLE) & ~world.vaccinated
        exposure = infectious_counts[cells[susceptible]]
        p_hit = 1.0 - np.power(1.0 - p_eff, exposure)
        hit = rng.random(p_hit.shape) < p_hit
        idx = np.flatnonzero(susceptible)[hit]
        world.status[idx] = INCUBATING
        world.incubation[idx] = params.incubation_days
        new_infections[day] = len(idx)
        timings["infect"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        incubating = world.status == INCUBATING
        world.incubation[incubating] -= 1
        matured = incubating & (world.incubation <= 0)
        world.status[matured] = INFECTIOUS

        infectious = world.status == INFECTIOUS
        n_inf = int(infectious.sum())
        if n_inf:
            draws = rng.random(n_inf)
            dies = draws < params.mortality_rate
            recovers = (~dies) & (draws < params.mortality_rate + params.recovery_rate)
            inf_idx = np.flatnonzero(infectious)
            world.status[inf_idx[dies]] = DEAD
            world.status[inf_idx[recovers]] = RECOVERED
            new_deaths[day] = int(dies.sum())

        if vaccine > 0:
            eligible = (world.status == SUSCEPTIBLE) & ~world.vaccinated
            take = rng.random(int(eligible.sum())) < params.vaccination_unit * vaccine
            world.vaccinated[np.flatnonzero(eligible)[take]] = True
        timings["progress"] += time.perf_counter() - t0

    return {
        "new_infections": new_infections,
        "new_deaths": new_deaths,
        "timings": timings,
        "init_seconds": world.init_seconds,
        "final_counts": world.counts(),
    }


def measure_init_times(lengths, density: float, seed: int = 0,
                       params: AbmParams | None = None) -> list[tuple[int, float]]:
    """Wall-clock world-construction time for each grid length."""
    out = []
    for length in lengths:
        world = AbmWorld.build(int(length), density, seed=seed, params=params)
        out.append((int(length), world.init_seconds))
    return out


def extrapolate_init_time(measurements: list[tuple[int, float]],
                          target_length: int = 500) -> dict:
    """Quadratic fit of init time against grid length, extrapolated."""
    lengths = np.array([m[0] for m in measurements], dtype=float)
    seconds = np.array([m[1] for m in measurements], dtype=float)
    coeffs = np.polyfit(lengths, seconds, 2)
    predicted = float(np.polyval(coeffs, target_length))
    return {
        "coefficients": coeffs.tolist(),
        "target_length": target_length,
        "predicted_seconds": predicted,
        "measurements": [{"length": int(l), "seconds": float(s)}
                         for l, s in measurements],
    }
