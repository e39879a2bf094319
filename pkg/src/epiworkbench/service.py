"""HTTP service: scenario presets, interactive sessions, fronts, experiments.

Sessions are held in memory behind per-session locks and optionally
persisted to an append-only JSONL log; on restart the log is replayed,
which reproduces each session exactly thanks to the simulator's
determinism contract.  Experiments run as background jobs with polled
status.  All responses echo effective (post-masking) actions.
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .env import EpiEnv, EpisodeDoneError, list_scenarios, load_scenario
from .experiments import AgentCache, ExperimentSpec, UnknownExperimentError, run_experiment
from .pareto import front_to_json, reference_front
from .pcn import Command, act, priority_command

__all__ = ["ServiceSettings", "create_app"]


@dataclass
class ServiceSettings:
    artifacts_dir: Path = Path("artifacts")
    checkpoint_dir: Path | None = None
    session_log: Path | None = None
    max_workers: int = 2

    def __post_init__(self):
        self.artifacts_dir = Path(self.artifacts_dir)
        if self.checkpoint_dir is not None:
            self.checkpoint_dir = Path(self.checkpoint_dir)
        if self.session_log is not None:
            self.session_log = Path(self.session_log)


class ActionPayload(BaseModel):
    closure: int = Field(0, ge=0, le=10)
    vaccination: int = Field(0, ge=0, le=10)
    quarantine: int = Field(0, ge=0, le=10)


class SessionRequest(BaseModel):
    scenario: str
    seed: int | None = None
    deterministic: bool = False
    mode: str = Field("manual", pattern="^(manual|agent-suggest)$")


class ExperimentRequest(BaseModel):
    experiment_id: str
    params: dict = Field(default_factory=dict)
    seed: int = 0


@dataclass
class Session:
    session_id: str
    scenario: str
    seed: int
    deterministic: bool
    mode: str
    env: EpiEnv
    created_at: str
    history: list[dict] = field(default_factory=list)
    pending_suggestion: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def state_payload(self) -> dict:
        state = self.env.state
        c = state.compartments
        return {
            "day": state.day,
            "done": state.done,
            "compartments": {"s": c.s, "h": c.h, "i": c.i, "q": c.q, "d": c.d},
        }

    def view(self) -> dict:
        return {
            "id": self.session_id,
            "scenario": self.scenario,
            "seed": self.seed,
            "deterministic": self.deterministic,
            "mode": self.mode,
            "created_at": self.created_at,
            "horizon_days": self.env.spec.sim.horizon_days,
            "population": self.env.spec.population,
            "state": self.state_payload(),
            "history": self.history,
            "pending_suggestion": self.pending_suggestion,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings()
    settings.artifacts_dir.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="pandemic intervention workbench", version="0.1.0")
    sessions: dict[str, Session] = {}
    jobs: dict[str, dict] = {}
    executor = ThreadPoolExecutor(max_workers=settings.max_workers)
    cache = AgentCache(checkpoint_dir=settings.checkpoint_dir)
    fronts_dir = settings.artifacts_dir / "fronts"
    registry_lock = threading.Lock()

    def log_event(event: dict) -> None:
        if settings.session_log is None:
            return
        settings.session_log.parent.mkdir(parents=True, exist_ok=True)
        with open(settings.session_log, "a") as fh:
            fh.write(json.dumps(event) + "\n")

    def build_session(scenario: str, seed: int, deterministic: bool,
                      mode: str, session_id: str, created_at: str) -> Session:
        try:
            spec = load_scenario(scenario)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        if deterministic:
            spec = spec.deterministic()
        env = EpiEnv(spec, seed=seed)
        env.reset(seed=seed)
        return Session(session_id=session_id, scenario=scenario, seed=seed,
                       deterministic=deterministic, mode=mode, env=env,
                       created_at=created_at)

    def apply_step(session: Session, payload: ActionPayload) -> dict:
        with session.lock:
            try:
                state, reward, done, info = session.env.step(
                    (payload.closure, payload.vaccination, payload.quarantine))
            except EpisodeDoneError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            effective = info["action"]
            record = {
                "day": state.day,
                "action": {"closure": effective.closure,
                           "vaccination": effective.vaccination,
                           "quarantine": effective.quarantine},
                "reward": [float(r) for r in reward],
                "new_infections": info["new_infections"],
                "new_deaths": info["new_deaths"],
                "economic_cost": info["economic_cost"],
                "compartments": {
                    "s": state.compartments.s, "h": state.compartments.h,
                    "i": state.compartments.i, "q": state.compartments.q,
                    "d": state.compartments.d},
                "done": done,
            }
            session.history.append(record)
            session.pending_suggestion = None
            return record

    def replay_log() -> None:
        if settings.session_log is None or not settings.session_log.exists():
            return
        for line in settings.session_log.read_text().splitlines():
            event = json.loads(line)
            if event["type"] == "created":
                sessions[event["id"]] = build_session(
                    event["scenario"], event["seed"], event["deterministic"],
                    event["mode"], event["id"], event["created_at"])
            elif event["type"] == "step" and event["id"] in sessions:
                apply_step(sessions[event["id"]], ActionPayload(**event["action"]))

    replay_log()

    @app.get("/scenarios")
    def scenarios() -> list[dict]:
        out = []
        for name in list_scenarios():
            spec = load_scenario(name)
            out.append({
                "name": name,
                "description": spec.description,
                "population": spec.population,
                "horizon_days": spec.sim.horizon_days,
                "coverage": spec.coverage,
                "action_mask": {"closure": spec.action_mask[0],
                                "vaccination": spec.action_mask[1],
                                "quarantine": spec.action_mask[2]},
                "initial": spec.initial.__dict__,
            })
        return out

    @app.post("/sessions", status_code=201)
    def create_session(request: SessionRequest) -> dict:
        session_id = uuid.uuid4().hex[:12]
        seed = request.seed if request.seed is not None else int(
            np.random.SeedSequence().entropy % (2**31))
        created_at = _now()
        session = build_session(request.scenario, seed, request.deterministic,
                                request.mode, session_id, created_at)
        with registry_lock:
            sessions[session_id] = session
        log_event({"type": "created", "id": session_id, "scenario": request.scenario,
                   "seed": seed, "deterministic": request.deterministic,
                   "mode": request.mode, "created_at": created_at})
        return session.view()

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404,
                                detail=f"no session {session_id!r}")
        return session

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str) -> dict:
        return get_session(session_id).view()

    @app.post("/sessions/{session_id}/step")
    def session_step(session_id: str, action: ActionPayload) -> dict:
        session = get_session(session_id)
        record = apply_step(session, action)
        log_event({"type": "step", "id": session_id,
                   "action": {"closure": action.closure,
                              "vaccination": action.vaccination,
                              "quarantine": action.quarantine}})
        return record

    @app.get("/sessions/{session_id}/suggest")
    def session_suggest(session_id: str, c: str = "balanced",
                        targets: str | None = None,
                        horizon: int | None = None) -> dict:
        session = get_session(session_id)
        with session.lock:
            state = session.env.state
            if state.done:
                raise HTTPException(status_code=409, detail="episode finished")
            spec = session.env.spec
            remaining = max(1, spec.sim.horizon_days - state.day)
            desired = None
            if targets:
                try:
                    desired = tuple(float(x) for x in targets.split(","))
                    if len(desired) != 3:
                        raise ValueError
                except ValueError as exc:
                    raise HTTPException(status_code=422,
                                        detail="targets must be r1,r2,r3") from exc
            try:
                pcn, returns, _ = cache.get(spec, train_on_miss=False)
            except Exception as exc:
                raise HTTPException(
                    status_code=409,
                    detail=f"no trained policy available for {spec.name!r}: {exc}",
                ) from exc
            if desired is not None:
                command = Command(desired_return=desired,
                                  horizon=horizon or remaining)
            else:
                if c == "economic":
                    from .experiments import zero_run_return

                    baseline = zero_run_return(spec)
                    command = priority_command(returns, horizon or remaining, c,
                                               baseline_return=baseline)
                else:
                    try:
                        command = priority_command(returns, horizon or remaining, c)
                    except ValueError as exc:
                        raise HTTPException(status_code=422, detail=str(exc)) from exc
            suggestion = act(pcn, state.observation(), command, greedy=True)
            effective = spec.mask_action(suggestion)
            payload = {
                "day": state.day,
                "command": {"targets": list(command.desired_return),
                            "horizon": command.horizon, "priority": c},
                "action": {"closure": effective.closure,
                           "vaccination": effective.vaccination,
                           "quarantine": effective.quarantine},
            }
            session.pending_suggestion = payload
            return payload

    @app.get("/fronts/{scenario}")
    def front(scenario: str, deterministic: bool = True,
              source: str = "reference", episodes: int = 20) -> list[dict]:
        try:
            spec = load_scenario(scenario)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        if source == "agent":
            try:
                pcn, returns, _ = cache.get(spec, train_on_miss=False)
            except Exception as exc:
                raise HTTPException(
                    status_code=409,
                    detail=f"no trained policy available for {scenario!r}: {exc}",
                ) from exc
            from .experiments import zero_run_return
            from .pcn import evaluate_front

            horizon = spec.sim.horizon_days
            commands = [
                priority_command(returns, horizon, "infection"),
                priority_command(returns, horizon, "balanced"),
                priority_command(returns, horizon, "economic",
                                 baseline_return=zero_run_return(spec)),
            ]
            points = evaluate_front(pcn, commands, spec, n_episodes=episodes)
            return front_to_json(points)
        if source != "reference":
            raise HTTPException(status_code=422,
                                detail="source must be 'reference' or 'agent'")
        fronts_dir.mkdir(parents=True, exist_ok=True)
        cache_path = fronts_dir / f"{scenario}{'_det' if deterministic else ''}.json"
        if cache_path.exists():
            return json.loads(cache_path.read_text())
        points = reference_front(spec, deterministic=deterministic)
        payload = front_to_json(points, cache_path)
        return payload

    @app.post("/experiments", status_code=202)
    def submit_experiment(request: ExperimentRequest) -> dict:
        try:
            spec = ExperimentSpec(experiment_id=request.experiment_id,
                                  params=request.params, seed=request.seed)
        except UnknownExperimentError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        job_id = uuid.uuid4().hex[:12]
        bundle_dir = settings.artifacts_dir / "experiments" / f"{request.experiment_id}-{job_id}"
        with registry_lock:
            jobs[job_id] = {"status": "queued", "experiment_id": request.experiment_id,
                            "bundle_dir": str(bundle_dir), "submitted_at": _now()}

        def job():
            jobs[job_id]["status"] = "running"
            try:
                summary = run_experiment(spec, bundle_dir, cache=cache)
                jobs[job_id].update(status="done", summary=summary,
                                    finished_at=_now())
            except Exception as exc:  # surfaced through polling
                jobs[job_id].update(status="failed", error=str(exc),
                                    finished_at=_now())

        executor.submit(job)
        return {"job": job_id, "status": "queued"}

    @app.get("/experiments/{job_id}")
    def experiment_status(job_id: str) -> dict:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id!r}")
        return {"job": job_id, **job}

    return app
