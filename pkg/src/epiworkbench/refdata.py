"""Bundled reference dataset generator.

The workbench ships a generator for a schema-faithful reference dataset
covering six benchmark countries.  Observed-like case curves come from the
calibrated simulator itself (sigma = 0.020) with per-country contact-rate
heterogeneity, reporting noise, and realistic intervention ramps encoded as
the 24 ordinal policy indicators; real upstream exports with the same
column layout can be dropped in instead at any time.

Each country's timeline starts with an uncontrolled-spread phase (all
indicators zero) long enough to yield one growth window, followed by
closure/health ramps and a late vaccine rollout.  The files written are
``policy.csv`` (long format), ``outcomes.csv``, ``country_stats.csv`` and a
``manifest.json`` recording the generation parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .data import CATEGORIES, load_indicator_mapping, strengths_to_levels
from .sde import Compartments, DiseaseProfile, InterventionLevels, SimConfig, simulate

__all__ = ["CountryConfig", "REFERENCE_COUNTRIES", "generate_reference_dataset"]


@dataclass(frozen=True)
class CountryConfig:
    name: str
    land_area_km2: float
    population: float
    contact_rate: float     # true daily interactions used for generation
    initial_infected: float  # simulated individuals at day 0
    seed: int


REFERENCE_COUNTRIES = (
    CountryConfig("United Kingdom", 242_495, 67_330_000, 10.45, 15.0, 11),
    CountryConfig("United States", 9_147_420, 331_900_000, 9.50, 60.0, 12),
    CountryConfig("Italy", 294_140, 59_110_000, 10.60, 12.0, 13),
    CountryConfig("Argentina", 2_736_690, 45_810_000, 9.85, 8.0, 14),
    CountryConfig("New Zealand", 263_310, 5_120_000, 9.40, 0.8, 15),
    CountryConfig("Vietnam", 310_070, 97_470_000, 10.20, 10.0, 16),
)

START_DATE = "2020-02-15"
UNCONTROLLED_DAYS = 16  # all indicators zero through this day


def _ramp(days: np.ndarray, anchors: list[tuple[float, float]]) -> np.ndarray:
    xs, ys = zip(*anchors)
    return np.interp(days, xs, ys)


def _strength_schedule(n_days: int, rng: np.random.Generator) -> np.ndarray:
    """Per-day strengths (n_days, 4) ordered like CATEGORIES."""
    days = np.arange(n_days)
    t0 = UNCONTROLLED_DAYS
    closure_peak = rng.uniform(0.45, 0.65)
    health_peak = rng.uniform(0.35, 0.55)
    economic_peak = rng.uniform(0.30, 0.50)
    vaccine_end = rng.uniform(0.40, 0.60)
    closure = _ramp(days, [(0, 0), (t0, 0), (t0 + 15, closure_peak),
                           (t0 + 75, closure_peak), (t0 + 110, 0.25),
                           (n_days - 1, 0.25)])
    economic = _ramp(days, [(0, 0), (t0, 0), (t0 + 10, economic_peak),
                            (n_days - 1, economic_peak)])
    health = _ramp(days, [(0, 0), (t0 + 3, 0), (t0 + 18, health_peak),
                          (n_days - 1, health_peak)])
    vaccine = _ramp(days, [(0, 0), (90, 0), (160, vaccine_end),
                           (n_days - 1, vaccine_end)])
    return np.column_stack([closure, economic, health, vaccine])


def _indicator_values(strengths: np.ndarray, mapping: dict,
                      rng: np.random.Generator) -> pd.DataFrame:
    """Expand per-category strengths into long-format ordinal indicator rows
    with per-indicator jitter and ~2% missingness."""
    names = list(mapping["indicators"])
    cat_idx = {c: k for k, c in enumerate(CATEGORIES)}
    offsets = {name: rng.uniform(-0.03, 0.03) for name in names}
    rows = []
    for day in range(len(strengths)):
        for name in names:
            if rng.random() < 0.02:
                continue
            spec = mapping["indicators"][name]
            target = strengths[day, cat_idx[spec["category"]]]
            value = int(round(np.clip(target + offsets[name], 0.0, 1.0) * spec["max"]))
            rows.append((day, name, value))
    return pd.DataFrame(rows, columns=["day", "indicator", "value"])


def _recovered_strengths(indicators: pd.DataFrame, mapping: dict,
                         n_days: int) -> np.ndarray:
    """Category strengths as the ingestion pipeline will compute them."""
    normalized = indicators.assign(
        norm=lambda df: df["value"] / df["indicator"].map(
            lambda n: mapping["indicators"][n]["max"]),
        category=lambda df: df["indicator"].map(
            lambda n: mapping["indicators"][n]["category"]),
    )
    out = np.zeros((n_days, len(CATEGORIES)))
    grouped = normalized.groupby(["day", "category"])["norm"].mean()
    for (day, category), value in grouped.items():
        out[day, CATEGORIES.index(category)] = value
    return out


def generate_reference_dataset(
    out_dir: str | Path,
    seed: int = 10,
    horizon_days: int = 170,
    countries: tuple[CountryConfig, ...] = REFERENCE_COUNTRIES,
) -> dict[str, Path]:
    """Write policy.csv, outcomes.csv, country_stats.csv and manifest.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mapping = load_indicator_mapping()
    dates = pd.date_range(START_DATE, periods=horizon_days, freq="D")

    policy_frames = []
    outcome_rows = []
    stats_rows = []
    manifest = {"seed": seed, "horizon_days": horizon_days,
                "start_date": START_DATE, "uncontrolled_days": UNCONTROLLED_DAYS,
                "countries": {}}

    for country in countries:
        rng = np.random.default_rng(seed + country.seed)
        strengths = _strength_schedule(horizon_days, rng)
        indicators = _indicator_values(strengths, mapping, rng)
        recovered = _recovered_strengths(indicators, mapping, horizon_days)
        # closure -> a_c, vaccine -> a_v, health -> a_q (quarantine proxy)
        levels = strengths_to_levels(
            recovered[:, [0, CATEGORIES.index("vaccine"), CATEGORIES.index("health")]])

        profile = replace(DiseaseProfile(), mu0=country.contact_rate)
        cfg = SimConfig(horizon_days=horizon_days,
                        rng_seed=seed * 1000 + country.seed)
        pop_sim = country.population / cfg.population_scale
        init = Compartments(pop_sim - country.initial_infected, 0.0,
                            country.initial_infected, 0.0, 0.0)

        def policy_fn(day, comps, levels=levels):
            c, v, q = levels[day]
            return InterventionLevels(int(c), int(v), int(q))

        traj = simulate(profile, cfg, policy_fn, init)

        # Reporting noise with a persistent (weekly-backlog style) component,
        # which survives 7-day smoothing, unlike day-to-day jitter.
        ar = np.zeros(horizon_days)
        shocks = rng.normal(0, 0.05, horizon_days)
        for t in range(1, horizon_days):
            ar[t] = 0.5 * ar[t - 1] + shocks[t]
        report_noise = ar + rng.normal(0, 0.03, horizon_days)
        death_noise = rng.normal(0, 0.05, horizon_days)
        new_cases = np.maximum(
            np.round(traj.new_infections * cfg.population_scale * np.exp(report_noise)), 0
        ).astype(int)
        new_deaths = np.maximum(
            np.round(traj.new_deaths * cfg.population_scale * np.exp(death_noise)), 0
        ).astype(int)
        base_cases = int(round(country.initial_infected * cfg.population_scale))
        total_cases = base_cases + np.cumsum(new_cases)
        total_deaths = np.cumsum(new_deaths)

        policy_frames.append(pd.DataFrame({
            "country": country.name,
            "date": dates[indicators["day"].to_numpy()].strftime("%Y-%m-%d"),
            "indicator": indicators["indicator"],
            "value": indicators["value"],
        }))
        outcome_rows.append(pd.DataFrame({
            "country": country.name,
            "date": dates.strftime("%Y-%m-%d"),
            "new_cases": new_cases,
            "total_cases": total_cases,
            "new_deaths": new_deaths,
            "total_deaths": total_deaths,
        }))
        stats_rows.append({"country": country.name,
                           "land_area_km2": country.land_area_km2,
                           "population": country.population})
        manifest["countries"][country.name] = {
            "contact_rate": country.contact_rate,
            "initial_infected_scaled": country.initial_infected,
            "cumulative_cases": int(total_cases[-1]),
        }

    paths = {
        "policy": out_dir / "policy.csv",
        "outcomes": out_dir / "outcomes.csv",
        "country_stats": out_dir / "country_stats.csv",
        "manifest": out_dir / "manifest.json",
    }
    pd.concat(policy_frames).to_csv(paths["policy"], index=False)
    pd.concat(outcome_rows).to_csv(paths["outcomes"], index=False)
    pd.DataFrame(stats_rows).to_csv(paths["country_stats"], index=False)
    paths["manifest"].write_text(json.dumps(manifest, indent=2))
    return paths
