"""Matplotlib figure rendering for report bundles.

Every CLI command that writes delimited output also renders the matching
figure next to it through these helpers.  All functions take data that is
already computed, write a PNG, and return the path; nothing here touches
the simulators.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "trajectory_figure",
    "overlay_figure",
    "front_figure",
    "growth_figure",
    "sigma_table_figure",
    "sensitivity_figure",
    "runtime_figure",
    "coverage_figure",
]

OBJECTIVE_LABELS = ("new infections", "new deaths", "economic cost")


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def trajectory_figure(rows: list[dict], path: str | Path, title: str = "") -> Path:
    """Daily outcomes and interventions of one episode (CSV-row dicts)."""
    days = [r["day"] for r in rows]
    fig, axes = plt.subplots(2, 2, figsize=(11, 7), sharex=True)
    axes[0, 0].plot(days, [r["new_infections"] for r in rows], color="tab:red")
    axes[0, 0].set_ylabel("new infections / day")
    axes[0, 1].plot(days, [r["new_deaths"] for r in rows], color="tab:gray")
    axes[0, 1].set_ylabel("new deaths / day")
    axes[1, 0].plot(days, [r["q"] for r in rows], color="tab:orange")
    axes[1, 0].set_ylabel("quarantined")
    axes[1, 0].set_xlabel("day")
    for key, label in (("a_c", "closure"), ("a_v", "vaccination"), ("a_q", "quarantine")):
        axes[1, 1].step(days, [r[key] for r in rows], where="mid", label=label)
    axes[1, 1].set_ylim(-0.5, 10.5)
    axes[1, 1].set_ylabel("intervention level")
    axes[1, 1].set_xlabel("day")
    axes[1, 1].legend(fontsize=8)
    if title:
        fig.suptitle(title)
    return _finish(fig, path)


def overlay_figure(observed: np.ndarray, simulated: np.ndarray, path: str | Path,
                   title: str = "") -> Path:
    """Observed daily new cases against a fan of simulated runs."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    days = np.arange(1, len(observed) + 1)
    for run in np.atleast_2d(simulated):
        ax.plot(days, run, color="tab:blue", alpha=0.35, lw=0.9)
    ax.plot(days, observed, color="black", lw=1.8, label="observed")
    ax.plot([], [], color="tab:blue", alpha=0.6, label="simulated runs")
    ax.set_xlabel("day")
    ax.set_ylabel("daily new cases")
    ax.legend()
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def front_figure(fronts: dict[str, np.ndarray], path: str | Path,
                 highlight: np.ndarray | None = None, title: str = "") -> Path:
    """Pairwise projections of one or more 3-objective fronts.

    ``fronts`` maps a label to an (n, 3) array; ``highlight`` draws one
    additional emphasized point (e.g. a user-played episode).
    """
    pairs = ((0, 1), (0, 2), (1, 2))
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    markers = ("o", "s", "^", "D")
    for ax, (i, j) in zip(axes, pairs):
        for k, (label, pts) in enumerate(fronts.items()):
            pts = np.atleast_2d(pts)
            if pts.size:
                ax.scatter(pts[:, i], pts[:, j], s=28, alpha=0.8,
                           marker=markers[k % len(markers)], label=label)
        if highlight is not None:
            ax.scatter([highlight[i]], [highlight[j]], s=120, marker="*",
                       color="crimson", zorder=5, label="your episode")
        ax.set_xlabel(OBJECTIVE_LABELS[i])
        ax.set_ylabel(OBJECTIVE_LABELS[j])
    handles, labels = axes[0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="upper center", ncol=len(labels),
                   fontsize=9)
    if title:
        fig.suptitle(title, y=0.88)
    return _finish(fig, path)


def growth_figure(real_rates: np.ndarray, simulated: dict[float, np.ndarray],
                  path: str | Path) -> Path:
    """Growth-rate histograms: observed pool vs selected simulated pools."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    bins = np.histogram_bin_edges(real_rates, bins=25)
    ax.hist(real_rates, bins=bins, density=True, alpha=0.45, color="black",
            label="observed")
    for sigma, rates in simulated.items():
        ax.hist(rates, bins=bins, density=True, histtype="step", lw=1.6,
                label=f"simulated, rate {sigma:g}")
    ax.set_xlabel("daily log growth rate")
    ax.set_ylabel("density")
    ax.legend()
    return _finish(fig, path)


def sigma_table_figure(table, path: str | Path) -> Path:
    """K-S statistic and p-value across the candidate grid."""
    fig, ax1 = plt.subplots(figsize=(8, 4.5))
    ax1.plot(table["sigma"], table["statistic"], "o-", color="tab:blue")
    ax1.set_xlabel("candidate transmission rate")
    ax1.set_ylabel("K-S statistic", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(table["sigma"], table["p_value"], "s--", color="tab:red")
    ax2.axhline(0.05, color="tab:red", lw=0.8, ls=":")
    ax2.set_ylabel("p-value", color="tab:red")
    best = table.loc[table["statistic"].idxmin(), "sigma"]
    ax1.axvline(best, color="gray", lw=0.8)
    return _finish(fig, path)


def sensitivity_figure(rows, path: str | Path) -> Path:
    """Grouped bars of mean relative AUC error per tested value."""
    names = []
    seen = []
    for r in rows:
        key = (r.kind, r.name)
        if key not in seen:
            seen.append(key)
    fig, axes = plt.subplots(1, len(seen), figsize=(2.3 * len(seen), 4),
                             sharey=True)
    if len(seen) == 1:
        axes = [axes]
    for ax, key in zip(axes, seen):
        vals = [(r.value, r.mean_error) for r in rows
                if (r.kind, r.name) == key]
        ax.bar([str(v) for v, _ in vals], [e for _, e in vals],
               color="tab:blue", alpha=0.8)
        ax.set_title(key[1], fontsize=9)
        ax.tick_params(axis="x", labelsize=7)
    axes[0].set_ylabel("mean relative AUC error")
    return _finish(fig, path)


def runtime_figure(fit: dict, path: str | Path) -> Path:
    """Measured init times with the quadratic extrapolation."""
    lengths = np.array([m["length"] for m in fit["measurements"]], dtype=float)
    seconds = np.array([m["seconds"] for m in fit["measurements"]])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(lengths, seconds, "o", label="measured")
    grid = np.linspace(lengths.min(), fit["target_length"], 200)
    ax.plot(grid, np.polyval(fit["coefficients"], grid), "--",
            label="quadratic fit")
    ax.scatter([fit["target_length"]], [fit["predicted_seconds"]], marker="*",
               s=140, color="crimson",
               label=f"extrapolated L={fit['target_length']}")
    ax.set_xlabel("grid length")
    ax.set_ylabel("initialization seconds")
    ax.legend()
    return _finish(fig, path)


def coverage_figure(series_by_coverage: dict[float, np.ndarray],
                    path: str | Path) -> Path:
    """Daily new infections under different initial protection levels."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for coverage, series in sorted(series_by_coverage.items(), reverse=True):
        ax.plot(np.arange(1, len(series) + 1), series,
                label=f"{coverage:.0%} coverage")
    ax.set_xlabel("day")
    ax.set_ylabel("daily new infections")
    ax.legend()
    return _finish(fig, path)
