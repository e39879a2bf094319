"""Country-day dataset ingestion and growth-window extraction.

Three inputs are merged into one country-day table: a long-format policy
CSV (country, date, indicator, value), an outcomes CSV (daily cases and
deaths), and a country-stats CSV (land area, population).  The 24 ordinal
policy indicators are normalized by their documented maxima and averaged
within four categories (closure, economic, health, vaccine) into per-day
strength indicators in [0, 1].

Growth windows are maximal consecutive runs of days with all category
strengths at or below a threshold and 7-day-smoothed new cases above a
floor; their pooled day-over-day log-growth rates are the calibration
reference distribution.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

import numpy as np
import pandas as pd

__all__ = [
    "CATEGORIES",
    "SchemaError",
    "DateParseError",
    "DuplicateRowError",
    "EmptyPoolError",
    "GrowthWindow",
    "load_indicator_mapping",
    "load_merge",
    "category_strengths",
    "extract_growth_windows",
    "growth_rate_distribution",
    "smooth_series",
    "qualifying_runs",
    "strengths_to_levels",
    "windows_to_json",
    "save_dataset",
    "load_dataset",
]

logger = logging.getLogger(__name__)

CATEGORIES = ("closure", "economic", "health", "vaccine")
SMOOTHING_DAYS = 7


class SchemaError(ValueError):
    """An input file is missing required columns."""


class DateParseError(ValueError):
    """An input file holds unparseable dates."""


class DuplicateRowError(ValueError):
    """An input file holds duplicate (country, date) keys."""


class EmptyPoolError(ValueError):
    """No growth rates survive filtering."""


def load_indicator_mapping(path: str | Path | None = None) -> dict:
    """Indicator -> {category, max} mapping (packaged default or custom file)."""
    if path is None:
        resource = files("epiworkbench") / "presets" / "indicator_mapping.json"
        return json.loads(resource.read_text())
    return json.loads(Path(path).read_text())


def _require_columns(df: pd.DataFrame, needed: list[str], source: str) -> None:
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise SchemaError(f"{source} is missing columns {missing}")


def _parse_dates(df: pd.DataFrame, source: str) -> pd.DataFrame:
    try:
        df = df.assign(date=pd.to_datetime(df["date"], format="%Y-%m-%d"))
    except (ValueError, TypeError) as exc:
        raise DateParseError(f"{source} holds unparseable dates: {exc}") from exc
    return df


def category_strengths(raw: dict, mapping: dict | None = None) -> tuple[dict, dict]:
    """Normalize one day's raw indicators and average them per category.

    ``raw`` maps indicator name to its ordinal value (None/NaN = missing).
    Returns (strengths, all_missing_flags) keyed by category; a category
    with no present indicators gets strength 0 and a raised flag.
    """
    mapping = mapping or load_indicator_mapping()
    sums = {c: 0.0 for c in CATEGORIES}
    counts = {c: 0 for c in CATEGORIES}
    for name, spec in mapping["indicators"].items():
        value = raw.get(name)
        if value is None or (isinstance(value, float) and np.isnan(value)):
            continue
        category = spec["category"]
        sums[category] += float(value) / spec["max"]
        counts[category] += 1
    strengths = {c: (sums[c] / counts[c] if counts[c] else 0.0) for c in CATEGORIES}
    flags = {c: counts[c] == 0 for c in CATEGORIES}
    return strengths, flags


def load_merge(
    policy_csv: str | Path,
    outcomes_csv: str | Path,
    country_stats_csv: str | Path,
    mapping: dict | str | Path | None = None,
) -> pd.DataFrame:
    """Inner-join policy and outcome tables on (country, date) with country
    stats broadcast; countries missing from either source are dropped and
    logged.  Adds normalized per-category strength columns and per-million
    outcome columns."""
    if not isinstance(mapping, dict):
        mapping = load_indicator_mapping(mapping)

    def renames(table: str) -> dict:
        # mapping["columns"][table] maps canonical name -> source column
        configured = mapping.get("columns", {}).get(table, {})
        return {source: canonical for canonical, source in configured.items()
                if source != canonical}

    policy = pd.read_csv(policy_csv).rename(columns=renames("policy"))
    _require_columns(policy, ["country", "date", "indicator", "value"], "policy file")
    policy = _parse_dates(policy, "policy file")
    dup = policy.duplicated(["country", "date", "indicator"])
    if dup.any():
        raise DuplicateRowError(
            f"policy file repeats {int(dup.sum())} (country, date, indicator) rows")
    wide = policy.pivot(index=["country", "date"], columns="indicator", values="value")
    wide = wide.reset_index()

    outcomes = pd.read_csv(outcomes_csv).rename(columns=renames("outcomes"))
    _require_columns(outcomes, ["country", "date", "new_cases", "total_cases",
                                "new_deaths", "total_deaths"], "outcomes file")
    outcomes = _parse_dates(outcomes, "outcomes file")
    dup = outcomes.duplicated(["country", "date"])
    if dup.any():
        raise DuplicateRowError(
            f"outcomes file repeats {int(dup.sum())} (country, date) rows")

    stats = pd.read_csv(country_stats_csv).rename(columns=renames("country_stats"))
    _require_columns(stats, ["country", "land_area_km2", "population"], "country stats file")

    merged = wide.merge(outcomes, on=["country", "date"], how="inner")
    merged = merged.merge(stats, on="country", how="inner")

    all_countries = set(policy["country"]) | set(outcomes["country"]) | set(stats["country"])
    kept = set(merged["country"])
    dropped = sorted(all_countries - kept)
    if dropped:
        logger.warning("dropped %d countries missing from one source: %s",
                       len(dropped), ", ".join(dropped))

    indicator_names = list(mapping["indicators"])
    for name in indicator_names:
        if name not in merged.columns:
            merged[name] = np.nan
    for category in CATEGORIES:
        members = [n for n in indicator_names
                   if mapping["indicators"][n]["category"] == category]
        normalized = pd.concat(
            [merged[n] / mapping["indicators"][n]["max"] for n in members], axis=1)
        merged[f"{category}_strength"] = normalized.mean(axis=1, skipna=True).fillna(0.0)
        merged[f"{category}_all_missing"] = normalized.isna().all(axis=1)

    for column in ("new_cases", "total_cases", "new_deaths", "total_deaths"):
        merged[f"{column}_per_million"] = merged[column] / merged["population"] * 1e6

    merged = merged.sort_values(["country", "date"]).reset_index(drop=True)
    return merged


def smooth_series(values: np.ndarray, window: int = SMOOTHING_DAYS) -> np.ndarray:
    """Trailing moving average; the first window-1 entries are NaN."""
    series = pd.Series(np.asarray(values, dtype=float))
    return series.rolling(window, min_periods=window).mean().to_numpy()


def qualifying_runs(mask: np.ndarray, min_len: int) -> list[tuple[int, int]]:
    """Maximal [start, end) runs of True at least ``min_len`` long."""
    runs = []
    start = None
    for idx, ok in enumerate(list(mask) + [False]):
        if ok and start is None:
            start = idx
        elif not ok and start is not None:
            if idx - start >= min_len:
                runs.append((start, idx))
            start = None
    return runs


@dataclass
class GrowthWindow:
    """One uncontrolled-spread window of a single country."""

    country: str
    start: str
    length: int
    cases: np.ndarray         # 7-day-smoothed daily new cases
    rates: np.ndarray         # per-day log growth, length - 1 entries

    def __post_init__(self):
        if self.length != len(self.cases):
            raise ValueError("window length must match its case series")


def _window_rates(smoothed: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.log(smoothed[1:] / smoothed[:-1])
    return rates


def extract_growth_windows(
    dataset: pd.DataFrame,
    min_len: int = 7,
    strength_threshold: float = 0.05,
    min_cases: float = 10.0,
) -> list[GrowthWindow]:
    """Maximal per-country runs where every category strength stays at or
    below the threshold and smoothed new cases stay at or above the floor."""
    windows = []
    for country, group in dataset.groupby("country", sort=True):
        group = group.sort_values("date")
        smoothed = smooth_series(group["new_cases"].to_numpy())
        strengths = group[[f"{c}_strength" for c in CATEGORIES]].to_numpy()
        with np.errstate(invalid="ignore"):
            mask = (np.all(strengths <= strength_threshold, axis=1)
                    & (smoothed >= min_cases)
                    & np.isfinite(smoothed))
        for start, end in qualifying_runs(mask, min_len):
            segment = smoothed[start:end]
            windows.append(GrowthWindow(
                country=country,
                start=str(group["date"].iloc[start].date()),
                length=end - start,
                cases=segment,
                rates=_window_rates(segment),
            ))
    return windows


def growth_rate_distribution(windows: list[GrowthWindow]) -> np.ndarray:
    """Pool per-day log growth rates across all windows, dropping non-finite."""
    if not windows:
        raise EmptyPoolError("no growth windows supplied")
    pooled = np.concatenate([w.rates for w in windows]) if windows else np.array([])
    pooled = pooled[np.isfinite(pooled)]
    if pooled.size == 0:
        raise EmptyPoolError("no finite growth rates after filtering")
    return pooled


def strengths_to_levels(strengths: np.ndarray) -> np.ndarray:
    """Map [0, 1] strengths onto the 11-level action grid."""
    return np.clip(np.round(np.asarray(strengths, dtype=float) * 10), 0, 10).astype(int)


def windows_to_json(windows: list[GrowthWindow], path: str | Path) -> Path:
    payload = [
        {"country": w.country, "start": w.start, "length": w.length,
         "cases": w.cases.tolist(), "rates": w.rates.tolist()}
        for w in windows
    ]
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2))
    return path


def save_dataset(dataset: pd.DataFrame, path: str | Path) -> Path:
    """Write the merged dataset as a gzip-compressed CSV."""
    path = Path(path)
    dataset.to_csv(path, index=False, compression="gzip" if path.suffix == ".gz" else None)
    return path


def load_dataset(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, parse_dates=["date"])
    return df
