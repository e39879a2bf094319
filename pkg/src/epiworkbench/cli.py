"""Command-line interface.

Every report-producing command writes delimited output (CSV/JSON) and a
rendered PNG figure next to it.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import calibration as calib
from . import data as datamod
from .baselines import (
    AbmWorld,
    GsirState,
    abm_simulate,
    default_gsir_params,
    extrapolate_init_time,
    gsir_simulate,
    measure_init_times,
)
from .calibration import DEFAULT_GSIR_BETA1, GrowthSimConfig
from .env import load_scenario, list_scenarios
from .experiments import AgentCache, ExperimentSpec, run_experiment, training_spec
from .figures import (
    growth_figure,
    overlay_figure,
    runtime_figure,
    sensitivity_figure,
    sigma_table_figure,
    trajectory_figure,
)
from .pareto import front_to_csv, front_to_json, reference_front
from .pcn import TrainConfig, save_checkpoint, train
from .refdata import generate_reference_dataset
from .sde import Compartments, InterventionLevels, SimConfig, load_profile, load_sim_config, simulate


@click.group()
def main():
    """Pandemic-intervention workbench."""


@main.command("make-refdata")
@click.option("--out", type=click.Path(path_type=Path), default=Path("data/reference"))
@click.option("--seed", type=int, default=10, show_default=True)
@click.option("--days", type=int, default=170, show_default=True)
def make_refdata(out: Path, seed: int, days: int):
    """Generate the bundled reference dataset CSVs."""
    paths = generate_reference_dataset(out, seed=seed, horizon_days=days)
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command()
@click.option("--policy", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--outcomes", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--country-stats", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--mapping", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=Path("data/merged.csv.gz"))
@click.option("--windows-out", type=click.Path(path_type=Path), default=Path("data/windows.json"))
def ingest(policy, outcomes, country_stats, mapping, out, windows_out):
    """Merge the three input CSVs and extract growth windows."""
    dataset = datamod.load_merge(policy, outcomes, country_stats, mapping)
    out.parent.mkdir(parents=True, exist_ok=True)
    datamod.save_dataset(dataset, out)
    windows = datamod.extract_growth_windows(dataset)
    datamod.windows_to_json(windows, windows_out)
    click.echo(f"merged {len(dataset)} rows for {dataset['country'].nunique()} countries -> {out}")
    click.echo(f"{len(windows)} growth windows -> {windows_out}")


@main.group()
def calibrate():
    """Simulator calibration."""


@calibrate.command("sigma")
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--grid", default="0.010:0.030:0.001", show_default=True,
              help="start:stop:step (stop exclusive)")
@click.option("--runs", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/sigma_search.csv"))
def calibrate_sigma(dataset, grid, runs, seed, out):
    """K-S grid search for the transmission rate."""
    frame = datamod.load_dataset(dataset)
    windows = datamod.extract_growth_windows(frame)
    rates = datamod.growth_rate_distribution(windows)
    start, stop, step = (float(x) for x in grid.split(":"))
    values = [round(start + k * step, 10) for k in range(int(round((stop - start) / step)))]
    config = GrowthSimConfig(seed=seed)
    result = calib.sigma_grid_search(rates, values, runs_per_sigma=runs, config=config)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.table.to_csv(out, index=False)
    sigma_table_figure(result.table, out.with_suffix(".png"))
    from .sde import DiseaseProfile

    shown = {s: calib.simulated_growth_rates(
        DiseaseProfile(sigma=s, delta=min(0.005, s)), config, runs, seed=config.seed)
        for s in (values[0], result.best_sigma, values[-1])}
    growth_figure(rates, shown, out.with_name("growth_rates.png"))
    click.echo(result.table.to_string(index=False))
    click.echo(f"best sigma: {result.best_sigma}")


@main.command()
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--simulator", type=click.Choice(calib.SIMULATORS), default="sde")
@click.option("--countries", default="United Kingdom,United States,Italy")
@click.option("--runs", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/validation.csv"))
def validate(dataset, simulator, countries, runs, seed, out):
    """Relative AUC errors of a simulator against recorded trajectories."""
    frame = datamod.load_dataset(dataset)
    names = [c.strip() for c in countries.split(",")]
    table = calib.validate_countries(frame, simulator, names, runs=runs, seed=seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False)
    click.echo(table.to_string(index=False))


@main.command()
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--table", "which", type=click.Choice(["params", "strengths", "both"]),
              default="both", show_default=True)
@click.option("--country", default="United Kingdom", show_default=True)
@click.option("--runs", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/sensitivity.csv"))
def sensitivity(dataset, which, country, runs, seed, out):
    """One-at-a-time parameter and intervention-strength sweeps."""
    frame = datamod.load_dataset(dataset)
    rows = calib.sensitivity_sweep(frame, country=country, runs=runs, seed=seed)
    if which == "params":
        rows = [r for r in rows if r.kind == "parameter"]
    elif which == "strengths":
        rows = [r for r in rows if r.kind == "intervention"]
    out.parent.mkdir(parents=True, exist_ok=True)
    import csv as _csv

    with open(out, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["kind", "name", "value", "mean_error"])
        for r in rows:
            writer.writerow([r.kind, r.name, r.value, r.mean_error])
    sensitivity_figure(rows, out.with_suffix(".png"))
    for r in rows:
        click.echo(f"{r.kind:13s} {r.name:10s} {r.value:>8g}  {r.mean_error:.4f}")


@main.command()
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--country", default="United Kingdom", show_default=True)
@click.option("--simulator", type=click.Choice(calib.SIMULATORS), default="sde")
@click.option("--runs", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/replay.csv"))
def replay(dataset, country, simulator, runs, seed, out):
    """Replay one country's recorded interventions and overlay the runs."""
    frame = datamod.load_dataset(dataset)
    if simulator != "sde":
        table = calib.validate_countries(frame, simulator, [country], runs=runs, seed=seed)
        click.echo(table.to_string(index=False))
        return
    result = calib.replay_country_runs(frame, country, runs=runs, seed=seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    import pandas as pd

    frame_out = pd.DataFrame({"date": result["dates"], "observed": result["new_cases"]})
    for k in range(runs):
        frame_out[f"run_{k}"] = result["simulated"][k]
    frame_out.to_csv(out, index=False)
    overlay_figure(result["new_cases"], result["simulated"], out.with_suffix(".png"),
                   title=f"{country}: mean relative AUC error {result['mean_error']:.3f}")
    click.echo(f"{country}: mean relative AUC error {result['mean_error']:.4f} -> {out}")


@main.command("front")
@click.option("--scenario", default="covid_uk", show_default=True)
@click.option("--stochastic", is_flag=True, default=False)
@click.option("--seeds", type=int, default=5, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/front.json"))
def front_cmd(scenario, stochastic, seeds, out):
    """Brute-force reference front over constant policies."""
    spec = load_scenario(scenario)
    points = reference_front(spec, deterministic=not stochastic, n_seeds=seeds)
    out.parent.mkdir(parents=True, exist_ok=True)
    front_to_json(points, out)
    front_to_csv(points, out.with_suffix(".csv"))
    from .figures import front_figure

    front_figure({"reference front": np.array([p.as_array() for p in points])},
                 out.with_suffix(".png"))
    click.echo(f"{len(points)} non-dominated policies -> {out}")


@main.command("train")
@click.option("--scenario", default="covid_uk", show_default=True)
@click.option("--uniform-initial/--preset-initial", default=False,
              help="draw initial infections uniformly from 1..20 instead of the preset rule")
@click.option("--iterations", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(path_type=Path), default=Path("checkpoints"))
def train_cmd(scenario, uniform_initial, iterations, seed, out):
    """Train the conditioned policy network on a scenario."""
    spec = training_spec(scenario) if uniform_initial else load_scenario(scenario)
    config = TrainConfig(seed=seed)
    if iterations is not None:
        config.iterations = iterations
    result = train(spec, config)
    out.mkdir(parents=True, exist_ok=True)
    path = save_checkpoint(result, out / f"{scenario}.npz", scenario=scenario)
    result.write_log(out / f"{scenario}_train_log.csv")
    click.echo(f"checkpoint -> {path}; final loss {result.log[-1]['loss']:.4f}")


@main.command("experiment")
@click.argument("experiment_id")
@click.option("--seed", type=int, default=0)
@click.option("--param", "params", multiple=True, help="key=json-value")
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/experiments"))
@click.option("--checkpoints", type=click.Path(path_type=Path), default=Path("checkpoints"))
def experiment_cmd(experiment_id, seed, params, out, checkpoints):
    """Run a named end-to-end experiment and write its artifact bundle."""
    parsed = {}
    for item in params:
        key, _, value = item.partition("=")
        parsed[key] = json.loads(value)
    spec = ExperimentSpec(experiment_id=experiment_id, params=parsed, seed=seed)
    cache = AgentCache(checkpoint_dir=checkpoints)
    bundle = Path(out) / experiment_id
    summary = run_experiment(spec, bundle, cache=cache)
    click.echo(json.dumps(summary, indent=2))
    click.echo(f"bundle -> {bundle}")


@main.group()
def baseline():
    """Rejected baseline simulators."""


@baseline.command("gsir")
@click.option("--level", type=int, default=1, show_default=True)
@click.option("--beta1", type=float, default=DEFAULT_GSIR_BETA1, show_default=True)
@click.option("--zeta", type=float, default=0.1, show_default=True)
@click.option("--population", type=int, default=68_000, show_default=True)
@click.option("--initial-infected", type=int, default=1000, show_default=True)
@click.option("--horizon", type=int, default=120, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/gsir.csv"))
def baseline_gsir(level, beta1, zeta, population, initial_infected, horizon, seed, out):
    """Run the generalized stochastic SIR baseline."""
    params = default_gsir_params(beta1, zeta=zeta)
    series = gsir_simulate(params, level, horizon,
                           GsirState(population - initial_infected, initial_infected, 0),
                           np.random.default_rng(seed))
    out.parent.mkdir(parents=True, exist_ok=True)
    import pandas as pd

    frame = pd.DataFrame({"day": np.arange(1, horizon + 1), **series})
    frame.to_csv(out, index=False)
    rows = [{"day": d + 1, "new_infections": series["new_infections"][d],
             "new_deaths": 0, "q": 0, "a_c": level, "a_v": 0, "a_q": 0}
            for d in range(horizon)]
    trajectory_figure(rows, out.with_suffix(".png"), title="generalized SIR baseline")
    click.echo(f"peak infectious {series['x_i'].max()} -> {out}")


@baseline.command("abm")
@click.option("--length", type=int, default=50, show_default=True)
@click.option("--density", type=float, default=276.0, show_default=True,
              help="persons per grid cell")
@click.option("--horizon", type=int, default=120, show_default=True)
@click.option("--initial-infected", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--timings/--no-timings", default=True,
              help="also measure init times over L=10..100 and extrapolate")
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/abm.csv"))
def baseline_abm(length, density, horizon, initial_infected, seed, timings, out):
    """Run the desk-scale agent-based baseline."""
    world = AbmWorld.build(length, density, seed=seed, initial_infected=initial_infected)
    result = abm_simulate(world, (0, 0, 0), horizon)
    out.parent.mkdir(parents=True, exist_ok=True)
    import pandas as pd

    pd.DataFrame({"day": np.arange(1, horizon + 1),
                  "new_infections": result["new_infections"],
                  "new_deaths": result["new_deaths"]}).to_csv(out, index=False)
    report = {"population": world.population, "init_seconds": world.init_seconds,
              "phase_timings": result["timings"], "final_counts": result["final_counts"]}
    if timings:
        measurements = measure_init_times(range(10, 101, 10), density, seed=seed)
        fit = extrapolate_init_time(measurements, target_length=500)
        report["init_fit"] = fit
        runtime_figure(fit, out.with_name("abm_runtime.png"))
    out.with_suffix(".timings.json").write_text(json.dumps(report, indent=2))
    click.echo(f"population {world.population}, peak daily cases "
               f"{int(result['new_infections'].max())} -> {out}")


@main.command("simulate")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="profile/sim TOML or JSON (defaults to the COVID preset)")
@click.option("--scenario", default=None, help="use a named scenario preset instead")
@click.option("--levels", default="0,0,0", show_default=True,
              help="constant closure,vaccination,quarantine levels")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(path_type=Path), default=Path("reports/trajectory.csv"))
def simulate_cmd(config_path, scenario, levels, seed, out):
    """Run one trajectory and export CSV + JSON + figure."""
    c, v, q = (int(x) for x in levels.split(","))
    action = InterventionLevels(c, v, q)
    if scenario:
        spec = load_scenario(scenario)
        profile, sim = spec.profile, spec.sim
        init = spec.initial_compartments(np.random.default_rng(seed))
    else:
        if config_path is None:
            from importlib.resources import files

            config_path = str(files("epiworkbench") / "presets" / "covid.toml")
        profile = load_profile(config_path)
        sim = load_sim_config(config_path)
        init = Compartments(67_000, 0, 1000, 0, 0)
    sim = SimConfig(**{**sim.__dict__, "rng_seed": seed})
    from .env import economic_cost

    traj = simulate(profile, sim, lambda d, comps: action, init,
                    cost_fn=economic_cost)
    out.parent.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out)
    traj.to_json(out.with_suffix(".json"))
    trajectory_figure(traj.to_rows(), out.with_suffix(".png"))
    click.echo(f"total infections {traj.new_infections.sum():.1f} -> {out}")


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--artifacts", type=click.Path(path_type=Path), default=Path("artifacts"))
@click.option("--checkpoints", type=click.Path(path_type=Path), default=Path("checkpoints"))
@click.option("--session-log", type=click.Path(path_type=Path), default=None)
@click.option("--static-dir", type=click.Path(path_type=Path), default=None,
              help="serve a built frontend bundle at /")
def serve(port, host, artifacts, checkpoints, session_log, static_dir):
    """Start the scenario service."""
    import uvicorn

    from .service import ServiceSettings, create_app

    app = create_app(ServiceSettings(artifacts_dir=artifacts,
                                     checkpoint_dir=checkpoints,
                                     session_log=session_log))
    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    uvicorn.run(app, host=host, port=port)


@main.command()
def scenarios():
    """List the shipped scenario presets."""
    for name in list_scenarios():
        spec = load_scenario(name)
        click.echo(f"{name:16s} {spec.description}")
