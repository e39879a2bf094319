import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiworkbench.sde import (
    Compartments,
    DegenerateStateError,
    DiseaseProfile,
    InterventionLevels,
    NoiseChannels,
    SimConfig,
    death_rate_from_cfr,
    drift,
    effective_rates,
    infectious_fraction,
    load_profile,
    load_sim_config,
    simulate,
    simulate_batch,
    step,
)

COVID = DiseaseProfile()
NO_ACTION = InterventionLevels()


def zero_policy(day, comps):
    return NO_ACTION


class TestEffectiveRates:
    def test_zero_action_column(self):
        r = effective_rates(COVID, InterventionLevels(0, 0, 0))
        assert r.beta == 0.0
        assert r.rho == 0.0
        assert r.mu == 10.0

    def test_full_closure(self):
        r = effective_rates(COVID, InterventionLevels(10, 0, 0))
        assert r.mu == pytest.approx(10.0 / 3.0)

    def test_full_vaccination_and_quarantine(self):
        r = effective_rates(COVID, InterventionLevels(0, 10, 10))
        assert r.beta == pytest.approx(0.005)
        assert r.rho == pytest.approx(0.1)

    def test_covid_preset_matches_reference_constants(self):
        assert COVID.omega == 0.000047
        assert COVID.sigma == 0.020
        assert COVID.a == 0.000018
        assert COVID.delta == 0.005
        assert COVID.nu == 0.0014
        assert COVID.phi == 0.14
        assert COVID.mu0 == 10.0
        assert COVID.beta_unit == 0.0005
        assert COVID.rho_unit == 0.01
        assert COVID.closure_factor == 0.2

    def test_invalid_levels_rejected(self):
        with pytest.raises(ValueError):
            InterventionLevels(11, 0, 0)
        with pytest.raises(ValueError):
            InterventionLevels(-1, 0, 0)


class TestInfectiousFraction:
    def test_basic(self):
        c = Compartments(1000, 0, 10, 0, 0)
        assert infectious_fraction(c) == pytest.approx(10 / 1010)

    def test_no_infectious(self):
        assert infectious_fraction(Compartments(100, 50, 0, 0, 3)) == 0.0

    def test_quarantined_in_denominator_only(self):
        assert infectious_fraction(Compartments(0, 0, 5, 5, 0)) == pytest.approx(0.5)

    def test_empty_living_population(self):
        with pytest.raises(DegenerateStateError):
            infectious_fraction(Compartments(0, 0, 0, 0, 10))


class TestDrift:
    def test_no_infection_source(self):
        c = Compartments(1000, 100, 0, 0, 0)
        d = drift(c, effective_rates(COVID, NO_ACTION))
        assert d[2] == 0.0  # dI
        assert d[4] == 0.0  # dD

    def test_new_infection_inflow_hand_arithmetic(self):
        c = Compartments(1000, 0, 10, 0, 0)
        r = effective_rates(COVID, NO_ACTION)
        inflow = r.sigma * r.mu * c.s * infectious_fraction(c)
        assert inflow == pytest.approx(0.02 * 10 * 1000 * (10 / 1010))
        assert inflow == pytest.approx(1.980198, abs=1e-6)
        # dI = inflow - outflow on I
        d = drift(c, r)
        assert d[2] == pytest.approx(inflow - (r.a + r.nu + r.phi + r.rho) * c.i)

    def test_all_susceptible_only_vital_dynamics(self):
        c = Compartments(5000, 0, 0, 0, 0)
        d = drift(c, effective_rates(COVID, NO_ACTION))
        assert d[0] == pytest.approx(COVID.omega * c.living - COVID.a * c.s)
        assert np.allclose(d[1:], 0.0)

    @given(
        s=st.floats(0, 1e6),
        h=st.floats(0, 1e6),
        i=st.floats(0, 1e6),
        q=st.floats(0, 1e6),
        d=st.floats(0, 1e6),
    )
    @settings(max_examples=200)
    def test_accounting_identity(self, s, h, i, q, d):
        c = Compartments(s, h, i, q, d)
        if c.living <= 0:
            return
        rates = effective_rates(COVID, InterventionLevels(3, 2, 1))
        total_rate = drift(c, rates).sum()
        expected = COVID.omega * c.living - COVID.a * c.living
        assert total_rate == pytest.approx(expected, rel=1e-9, abs=1e-12)


class TestStep:
    def test_zero_diffusion_equals_euler(self):
        profile = COVID.deterministic()
        cfg = SimConfig()
        c = Compartments(67000, 0, 1000, 0, 0)
        r = effective_rates(profile, InterventionLevels(1, 2, 3))
        nxt, _ = step(c, r, cfg, NoiseChannels(0))
        euler = c.as_array() + drift(c, r) * cfg.dt
        assert np.allclose(nxt.as_array(), euler, rtol=0, atol=0)

    def test_vanishing_dt_is_identity(self):
        # Both drift*dt and noise*sqrt(dt) vanish, so the update converges
        # to the identity; deviations shrink with dt.
        c = Compartments(67000, 0, 1000, 0, 0)
        r = effective_rates(COVID, NO_ACTION)
        deviations = []
        for dt, spd in ((1e-4, 10_000), (1e-8, 100_000_000)):
            cfg = SimConfig(dt=dt, steps_per_day=spd)
            nxt, _ = step(c, r, cfg, NoiseChannels(1))
            rel = np.abs(nxt.as_array() - c.as_array()) / (c.as_array() + 1.0)
            deviations.append(rel.max())
        assert deviations[1] < deviations[0]
        assert deviations[1] < 1e-4

    def test_mean_step_matches_deterministic_step(self):
        # Monte Carlo oracle: the EM update is unbiased, so the sample mean
        # over many noise draws must sit within 3 standard errors of the
        # drift-only step, componentwise.  d starts at 0 so the
        # non-decreasing-deaths ratchet cannot bias the mean (multiplicative
        # noise vanishes on an empty compartment).
        cfg = SimConfig(rng_seed=7)
        c = Compartments(60000, 5000, 2000, 500, 0)
        r = effective_rates(COVID, InterventionLevels(2, 2, 2))
        det, _ = step(c, r, cfg, None)
        channels = NoiseChannels(7)
        n = 10_000
        samples = np.empty((n, 5))
        for k in range(n):
            nxt, _ = step(c, r, cfg, channels)
            samples[k] = nxt.as_array()
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(mean - det.as_array()) <= 3 * se + 1e-12)

    def test_flows_accumulated_from_drift(self):
        c = Compartments(1000, 0, 10, 5, 0)
        cfg = SimConfig()
        r = effective_rates(COVID, NO_ACTION)
        _, flows = step(c, r, cfg, None)
        frac = infectious_fraction(c)
        expected_inf = (r.sigma * r.mu * c.s + r.delta * r.mu * c.h) * frac * cfg.dt
        assert flows.new_infections == pytest.approx(expected_inf)
        assert flows.new_deaths == pytest.approx(COVID.nu * (c.i + c.q) * cfg.dt)


class TestSimulate:
    def test_default_horizon_counts(self):
        cfg = SimConfig(rng_seed=3)
        traj = simulate(COVID, cfg, zero_policy, Compartments(67000, 0, 1000, 0, 0),
                        record_substeps=True)
        assert len(traj) == 50
        assert traj.substep_compartments.shape == (5000, 5)
        assert cfg.total_substeps == 5000

    def test_disease_free_equilibrium(self):
        cfg = SimConfig(rng_seed=5)
        traj = simulate(COVID, cfg, zero_policy, Compartments(67000, 0, 0, 0, 0))
        assert np.all(traj.new_infections == 0.0)
        assert np.all(traj.new_deaths == 0.0)

    def test_early_growth_positive_across_seeds(self):
        # With 1,000 infected in 68,000, the infection inflow exceeds the
        # I outflow, so early daily new infections must grow on average.
        growths = []
        for seed in range(10):
            cfg = SimConfig(rng_seed=seed)
            traj = simulate(COVID, cfg, zero_policy, Compartments(67000, 0, 1000, 0, 0))
            days = traj.new_infections[:10]
            growths.append(np.mean(np.diff(np.log(days))))
        assert np.mean(growths) > 0

    def test_empty_horizon(self):
        cfg = SimConfig(horizon_days=0)
        traj = simulate(COVID, cfg, zero_policy, Compartments(100, 0, 1, 0, 0))
        assert len(traj) == 0

    def test_monotone_deaths(self):
        cfg = SimConfig(rng_seed=11)
        traj = simulate(COVID, cfg, zero_policy, Compartments(60000, 0, 8000, 0, 0),
                        record_substeps=True)
        assert np.all(np.diff(traj.compartments[:, 4]) >= 0)
        assert np.all(np.diff(traj.substep_compartments[:, 4]) >= 0)

    def test_determinism_bit_identical(self):
        cfg = SimConfig(rng_seed=42)
        init = Compartments(67000, 0, 1000, 0, 0)

        def policy(day, comps):
            return InterventionLevels(day % 3, (day + 1) % 2, 0)

        a = simulate(COVID, cfg, policy, init)
        b = simulate(COVID, cfg, policy, init)
        assert np.array_equal(a.compartments, b.compartments)
        assert np.array_equal(a.new_infections, b.new_infections)
        assert np.array_equal(a.new_deaths, b.new_deaths)
        assert np.array_equal(a.actions, b.actions)

    def test_accounting_identity_along_drift_trajectory(self):
        profile = COVID.deterministic()
        cfg = SimConfig(rng_seed=0, horizon_days=5)
        c = Compartments(60000, 2000, 3000, 500, 10)
        r = effective_rates(profile, InterventionLevels(2, 1, 3))
        state = c
        for _ in range(200):
            nxt, _ = step(state, r, cfg, None)
            delta = nxt.total - state.total
            expected = (profile.omega * state.living - profile.a * state.living) * cfg.dt
            assert delta == pytest.approx(expected, rel=1e-9, abs=1e-12)
            state = nxt

    def test_clamping_preserves_death_flow_accounting(self):
        # Large diffusion forces clamp events near zero; reported deaths must
        # still equal the sum of the drift-based substep terms.
        profile = DiseaseProfile(w=(0.8, 0.8, 0.8, 0.8, 0.8))
        cfg = SimConfig(rng_seed=13, horizon_days=5)
        init = Compartments(50, 0, 3, 1, 0)
        traj = simulate(profile, cfg, zero_policy, init, record_substeps=True)
        spd = cfg.steps_per_day
        pre = np.vstack([init.as_array(), traj.substep_compartments[:-1]])
        per_substep = profile.nu * (pre[:, 2] + pre[:, 3]) * cfg.dt
        for day in range(cfg.horizon_days):
            expected = per_substep[day * spd:(day + 1) * spd].sum()
            assert traj.new_deaths[day] == pytest.approx(expected, rel=1e-12)

    def test_closure_monotonically_reduces_one_step_infections(self):
        c = Compartments(60000, 3000, 4000, 200, 0)
        cfg = SimConfig()
        profile = COVID.deterministic()
        inflows = []
        for level in range(11):
            r = effective_rates(profile, InterventionLevels(level, 0, 0))
            _, flows = step(c, r, cfg, None)
            inflows.append(flows.new_infections)
        assert all(a >= b for a, b in zip(inflows, inflows[1:]))

    def test_vaccination_monotonically_increases_protection_flow(self):
        c = Compartments(60000, 3000, 4000, 200, 0)
        flows = [effective_rates(COVID, InterventionLevels(0, lvl, 0)).beta * c.s
                 for lvl in range(11)]
        assert all(a <= b for a, b in zip(flows, flows[1:]))


class TestSimulateBatch:
    def test_matches_single_runs(self):
        cfg = SimConfig(rng_seed=21, horizon_days=10)
        init = Compartments(67000, 0, 1000, 0, 0)
        levels = [InterventionLevels(0, 0, 0), InterventionLevels(5, 5, 5)]
        comps, new_inf, new_dead = simulate_batch(COVID, cfg, levels, init)
        assert comps.shape == (2, 10, 5)
        # Deterministic check: batch equals sequential simulate in drift mode.
        det = COVID.deterministic()
        comps_d, inf_d, _ = simulate_batch(det, cfg, levels, init)
        for idx, lv in enumerate(levels):
            traj = simulate(det, cfg, lambda d, c, lv=lv: lv, init)
            assert np.allclose(comps_d[idx], traj.compartments)
            assert np.allclose(inf_d[idx], traj.new_infections)

    def test_per_day_schedules(self):
        cfg = SimConfig(rng_seed=2, horizon_days=4)
        init = Compartments(1000, 0, 10, 0, 0)
        schedule = [[InterventionLevels(d, 0, 0) for d in range(4)]]
        comps, _, _ = simulate_batch(COVID.deterministic(), cfg, schedule, init)
        traj = simulate(COVID.deterministic(), cfg,
                        lambda d, c: InterventionLevels(d, 0, 0), init)
        assert np.allclose(comps[0], traj.compartments)


class TestConfigAndExport:
    def test_dt_grid_validation(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.02, steps_per_day=100)

    def test_trajectory_round_trip(self, tmp_path):
        cfg = SimConfig(rng_seed=1, horizon_days=3)
        traj = simulate(COVID, cfg, zero_policy, Compartments(1000, 0, 10, 0, 0))
        csv_path = traj.to_csv(tmp_path / "traj.csv")
        header = csv_path.read_text().splitlines()[0]
        assert header == "day,s,h,i,q,d,new_infections,new_deaths,a_c,a_v,a_q,r1,r2,r3"
        json_path = traj.to_json(tmp_path / "traj.json")
        payload = json.loads(json_path.read_text())
        assert len(payload["days"]) == 3
        assert payload["days"][0]["day"] == 1

    def test_load_profile_toml_and_json(self, tmp_path):
        toml_text = "[profile]\nsigma = 0.03\n\n[sim]\nhorizon_days = 10\n"
        p = tmp_path / "cfg.toml"
        p.write_text(toml_text)
        prof = load_profile(p)
        assert prof.sigma == 0.03
        assert load_sim_config(p).horizon_days == 10
        j = tmp_path / "cfg.json"
        j.write_text(json.dumps({"profile": {"sigma": 0.025}, "sim": {"rng_seed": 9}}))
        assert load_profile(j).sigma == 0.025
        assert load_sim_config(j).rng_seed == 9

    def test_default_covid_preset_file(self):
        from importlib.resources import files

        preset = files("epiworkbench") / "presets" / "covid.toml"
        prof = load_profile(str(preset))
        assert prof == DiseaseProfile()

    def test_death_rate_from_cfr_inverts(self):
        nu = death_rate_from_cfr(0.0099, 0.14)
        assert nu / (nu + 0.14) == pytest.approx(0.0099)
