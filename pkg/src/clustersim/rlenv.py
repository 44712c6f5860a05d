"""Episodic reset/step environment over the engine, plus the wire protocol.

Observation layout (length 5K + 6 for K queue slots):
  per slot: [wait, cores, gpus, node_count, walltime]   (normalized, zero-padded)
  system:   [free cores, free gpus, idle nodes, it power / rated,
             queue length, running count]               (all fractions)
Entries are clamped to [0, 1] so the space is bounded.

Action a in [0, K-1] dispatches queue slot a via first-fit; a = K is a no-op.
Either way the engine advances exactly one delta per env step.

The protocol is newline-delimited JSON over stdio or TCP.  Commands:
reset {seed?, scenario?}, step {action}, spec {}, close {}.  Every response
carries ok; sessions are independent and survive command errors.
"""
from __future__ import annotations

import json
import socketserver
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .cluster import ClusterConfig, cluster_from_dict, load_cluster
from .engine import Engine, SimConfig
from .errors import ConfigError, ProtocolError, SessionStateError, SimulationError
from .power import RewardWeights, load_carbon_intensity
from .schedulers import ScheduleDecision, first_fit
from .workload import JobRecord, SynthParams, generate_synthetic, load_trace_dir

DEFAULT_QUEUE_SLOTS = 8
DEFAULT_INVALID_PENALTY = 0.1
FALLBACK_HORIZON_NORM_S = 86400.0


@dataclass
class Scenario:
    cluster: ClusterConfig
    synth: Optional[SynthParams] = None
    trace_jobs: Optional[list[JobRecord]] = None
    delta_s: float = 1.0
    horizon_s: Optional[float] = None
    carbon_intensity: object = 0.0
    reward_weights: Optional[RewardWeights] = None
    queue_slots: int = DEFAULT_QUEUE_SLOTS
    invalid_penalty: float = DEFAULT_INVALID_PENALTY
    seed: int = 0

    def __post_init__(self):
        if (self.synth is None) == (self.trace_jobs is None):
            raise ConfigError("scenario: exactly one of synth params or trace workload required")
        if self.queue_slots < 1:
            raise ConfigError("scenario: queue_slots must be >= 1")
        if self.invalid_penalty < 0:
            raise ConfigError("scenario: invalid_penalty must be >= 0")

    def workload(self, seed: Optional[int]) -> list[JobRecord]:
        if self.trace_jobs is not None:
            return list(self.trace_jobs)
        return generate_synthetic(self.synth, seed=self.seed if seed is None else seed)

    def reward_weights_or_default(self) -> RewardWeights:
        if self.reward_weights is not None:
            return self.reward_weights
        rated_facility = self.cluster.rated_power_w * self.cluster.pue
        return RewardWeights(energy_norm_j=max(rated_facility * self.delta_s, 1.0))


def load_scenario(source, base_dir: Optional[Path] = None) -> Scenario:
    """Scenario from a JSON path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"scenario: no such file {path}")
        base_dir = path.parent
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario {path}: invalid JSON ({exc})") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise ConfigError("scenario: expected a JSON object")
    base_dir = base_dir or Path.cwd()

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    cluster_field = data.get("cluster")
    if cluster_field is None:
        raise ConfigError("scenario: missing field 'cluster'")
    cluster = (cluster_from_dict(cluster_field) if isinstance(cluster_field, dict)
               else load_cluster(resolve(cluster_field)))

    workload_field = data.get("workload")
    if not isinstance(workload_field, dict):
        raise ConfigError("scenario: missing field 'workload'")
    synth = trace_jobs = None
    if "synth" in workload_field:
        raw = workload_field["synth"]
        synth = (SynthParams.from_dict(raw) if isinstance(raw, dict)
                 else SynthParams.from_json(resolve(raw)))
    elif "trace" in workload_field:
        trace_jobs = load_trace_dir(resolve(workload_field["trace"]))
    else:
        raise ConfigError("scenario: workload needs 'synth' or 'trace'")

    sim = data.get("sim", {})
    rl = data.get("rl", {})
    weights = RewardWeights.from_dict(rl["reward_weights"]) if "reward_weights" in rl else None
    return Scenario(
        cluster=cluster,
        synth=synth,
        trace_jobs=trace_jobs,
        delta_s=float(sim.get("delta_s", 1.0)),
        horizon_s=float(sim["horizon_s"]) if sim.get("horizon_s") is not None else None,
        carbon_intensity=sim.get("carbon_intensity", 0.0),
        reward_weights=weights,
        queue_slots=int(rl.get("queue_slots", DEFAULT_QUEUE_SLOTS)),
        invalid_penalty=float(rl.get("invalid_penalty", DEFAULT_INVALID_PENALTY)),
        seed=int(data.get("seed", 0)),
    )


@dataclass(frozen=True)
class StepResult:
    observation: list[float]
    reward: float
    done: bool
    info: dict


class SchedulingEnv:
    """Reset/step environment; each instance owns one engine at a time."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.K = scenario.queue_slots
        self.weights = scenario.reward_weights_or_default()
        self._engine: Optional[Engine] = None
        self._done = False
        self._horizon_norm = scenario.horizon_s or FALLBACK_HORIZON_NORM_S
        totals = scenario.cluster.totals
        self._total_cores = max(totals.cores, 1)
        self._total_gpus = totals.gpus
        self._total_nodes = len(scenario.cluster.nodes)
        self._jobs_total = 1

    @property
    def observation_length(self) -> int:
        return 5 * self.K + 6

    @property
    def action_count(self) -> int:
        return self.K + 1

    def spec_payload(self) -> dict:
        return {
            "queue_slots": self.K,
            "observation_length": self.observation_length,
            "action_count": self.action_count,
            "invalid_penalty": self.scenario.invalid_penalty,
            "reward_weights": {
                "w_throughput": self.weights.w_throughput,
                "w_energy": self.weights.w_energy,
                "w_carbon": self.weights.w_carbon,
                "energy_norm_j": self.weights.energy_norm_j,
                "carbon_norm_g": self.weights.carbon_norm_g,
            },
        }

    def reset(self, seed: Optional[int] = None) -> list[float]:
        jobs = self.scenario.workload(seed)
        config = SimConfig(
            delta_s=self.scenario.delta_s,
            mode="reschedule",
            scheduler="fcfs",  # placeholder; steps are driven by explicit decisions
            horizon_s=self.scenario.horizon_s,
            carbon=load_carbon_intensity(self.scenario.carbon_intensity),
            reward_weights=self.weights,
            seed=seed,
        )
        self._engine = Engine(jobs, self.scenario.cluster, config)
        self._engine.absorb_arrivals()
        self._jobs_total = max(len(jobs), 1)
        self._done = self._engine.finished
        return self._observation()

    def step(self, action: int) -> StepResult:
        engine = self._engine
        if engine is None:
            raise SessionStateError("step before reset")
        if self._done:
            raise SessionStateError("episode is done; reset to start a new one")
        if not isinstance(action, int) or isinstance(action, bool) or not (0 <= action <= self.K):
            raise ProtocolError(f"action must be an integer in [0, {self.K}], got {action!r}")

        engine.absorb_arrivals()
        invalid = False
        decisions: list[ScheduleDecision] = []
        if action < self.K:
            if action < len(engine.queue):
                job = engine.queue[action]
                node_order = [n.node_id for n in engine.cluster.nodes]
                placements = first_fit(job, engine.pool.free_map(), node_order)
                if placements is None:
                    invalid = True
                else:
                    decisions.append(ScheduleDecision(job_id=job.job_id, placements=placements))
            else:
                invalid = True

        report = engine.step(decisions)
        engine.absorb_arrivals()
        self._done = engine.finished

        w = self.weights
        step_energy_j = report.facility_power_w * engine.config.delta_s
        reward = (w.w_throughput * len(report.jobs_finished)
                  - w.w_energy * (step_energy_j / w.energy_norm_j)
                  - w.w_carbon * (report.carbon_g / w.carbon_norm_g)
                  - (self.scenario.invalid_penalty if invalid else 0.0))
        info = {
            "it_power_w": report.it_power_w,
            "jobs_finished_total": engine.metrics.jobs_finished,
            "energy_kwh": engine.metrics.facility_energy_j / 3.6e6,
            "carbon_g": engine.metrics.carbon_g,
            "invalid_action": invalid,
            "truncated": self._done and not engine.drained,
        }
        return StepResult(observation=self._observation(), reward=reward,
                          done=self._done, info=info)

    def _observation(self) -> list[float]:
        engine = self._engine
        obs: list[float] = []

        def clamp(x: float) -> float:
            return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)

        for slot in range(self.K):
            if engine is not None and slot < len(engine.queue):
                job = engine.queue[slot]
                wait = max(engine.clock_s - job.submit_time_s, 0.0)
                obs.extend([
                    clamp(wait / self._horizon_norm),
                    clamp(job.requested.cores * job.node_count / self._total_cores),
                    clamp(job.requested.gpus * job.node_count / self._total_gpus) if self._total_gpus else 0.0,
                    clamp(job.node_count / self._total_nodes),
                    clamp(job.walltime_s / self._horizon_norm),
                ])
            else:
                obs.extend([0.0, 0.0, 0.0, 0.0, 0.0])

        if engine is None:
            obs.extend([0.0] * 6)
            return obs
        free = engine.pool.free_map()
        free_cores = sum(v.cores for v in free.values())
        free_gpus = sum(v.gpus for v in free.values())
        idle_nodes = sum(1 for node in engine.cluster.nodes
                         if free[node.node_id] == node.capacity)
        it_power = (engine.history[-1].it_power_w if engine.history
                    else sum(n.idle_power_w for n in engine.cluster.nodes))
        obs.extend([
            clamp(free_cores / self._total_cores),
            clamp(free_gpus / self._total_gpus) if self._total_gpus else 0.0,
            clamp(idle_nodes / self._total_nodes),
            clamp(it_power / engine.rated_power_w) if engine.rated_power_w else 0.0,
            clamp(len(engine.queue) / self._jobs_total),
            clamp(len(engine.running) / self._jobs_total),
        ])
        return obs


class Session:
    """One protocol session: a scenario plus at most one live episode."""

    def __init__(self, scenario: Optional[Scenario] = None,
                 base_dir: Optional[Path] = None):
        self.scenario = scenario
        self.base_dir = base_dir
        self.env: Optional[SchedulingEnv] = None

    def handle_line(self, line: str) -> tuple[dict, bool]:
        """Returns (response, should_close)."""
        try:
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed JSON: {exc}") from exc
            if not isinstance(msg, dict) or "cmd" not in msg:
                raise ProtocolError("message must be an object with a 'cmd' field")
            cmd = msg["cmd"]
            if cmd == "reset":
                return self._handle_reset(msg), False
            if cmd == "step":
                return self._handle_step(msg), False
            if cmd == "spec":
                return self._handle_spec(), False
            if cmd == "close":
                return {"ok": True, "closed": True}, True
            raise ProtocolError(f"unknown cmd '{cmd}'")
        except SimulationError as exc:
            return {"ok": False, "error": type(exc).__name__, "message": str(exc)}, False

    def _require_scenario(self) -> Scenario:
        if self.scenario is None:
            raise ConfigError("no scenario configured; pass one in reset or at startup")
        return self.scenario

    def _handle_reset(self, msg: dict) -> dict:
        if "scenario" in msg and msg["scenario"] is not None:
            self.scenario = load_scenario(msg["scenario"], base_dir=self.base_dir)
            self.env = None
        scenario = self._require_scenario()
        if self.env is None:
            self.env = SchedulingEnv(scenario)
        seed = msg.get("seed")
        if seed is not None and not isinstance(seed, int):
            raise ProtocolError(f"seed must be an integer, got {seed!r}")
        obs = self.env.reset(seed=seed)
        return {"ok": True, "obs": obs, "info": {}}

    def _handle_step(self, msg: dict) -> dict:
        if self.env is None:
            raise SessionStateError("step before reset")
        if "action" not in msg:
            raise ProtocolError("step requires an 'action' field")
        result = self.env.step(msg["action"])
        return {"ok": True, "obs": result.observation, "reward": result.reward,
                "done": result.done, "info": result.info}

    def _handle_spec(self) -> dict:
        scenario = self._require_scenario()
        env = self.env or SchedulingEnv(scenario)
        return {"ok": True, "spec": env.spec_payload()}


def serve_stdio(scenario: Optional[Scenario], base_dir: Optional[Path] = None,
                stdin=None, stdout=None) -> None:
    """One session over stdin/stdout; returns when the pipe closes."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    session = Session(scenario, base_dir=base_dir)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        response, close = session.handle_line(line)
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()
        if close:
            break


class _TCPHandler(socketserver.StreamRequestHandler):
    def handle(self):
        session = Session(self.server.scenario, base_dir=self.server.base_dir)
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            response, close = session.handle_line(line)
            self.wfile.write((json.dumps(response) + "\n").encode())
            self.wfile.flush()
            if close:
                break


class EnvServer(socketserver.ThreadingTCPServer):
    """Each connection gets its own Session and engine; nothing is shared."""
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, scenario: Optional[Scenario],
                 base_dir: Optional[Path] = None):
        super().__init__(address, _TCPHandler)
        self.scenario = scenario
        self.base_dir = base_dir


def serve_tcp(scenario: Optional[Scenario], port: int, host: str = "127.0.0.1",
              base_dir: Optional[Path] = None) -> EnvServer:
    """Bind and return the server; the caller runs serve_forever()."""
    return EnvServer((host, port), scenario, base_dir=base_dir)
