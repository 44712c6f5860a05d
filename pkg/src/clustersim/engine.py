"""Discrete-time simulation loop.

Each step runs a fixed sequence: absorb arrivals, schedule, progress running
jobs, convert utilization to power through the loss chain and PUE, accumulate
metrics, advance the clock.  Power for a step is charged over the full delta
for every job active during it, including jobs that complete at its end; a
node freed by a completion is usable by the scheduler in the next step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .cluster import ClusterConfig, ResourcePool
from .errors import CapacityViolation, ConfigError, SchedulerViolation, StarvationGuard
from .power import (CarbonIntensity, MetricsAccumulator, RewardWeights, SimMetrics,
                    apply_chain, facility_power, finalize_metrics, node_power)
from .schedulers import POLICIES, RunningInfo, ScheduleDecision
from .workload import JobRecord, resample_record

_EPS = 1e-9


@dataclass
class SimConfig:
    delta_s: float = 1.0
    mode: str = "reschedule"  # replay | reschedule
    scheduler: str = "fcfs"   # replay | fcfs | easy
    horizon_s: Optional[float] = None
    carbon: CarbonIntensity = field(default_factory=lambda: CarbonIntensity.constant(0.0))
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    starvation_cap_s: float = 1e8
    seed: Optional[int] = None

    def __post_init__(self):
        if self.delta_s <= 0:
            raise ConfigError(f"delta_s must be > 0, got {self.delta_s}")
        if self.mode not in ("replay", "reschedule"):
            raise ConfigError(f"mode must be replay or reschedule, got '{self.mode}'")
        if self.mode == "replay":
            self.scheduler = "replay"
        elif self.scheduler not in ("fcfs", "easy"):
            raise ConfigError(f"scheduler must be fcfs or easy in reschedule mode, got '{self.scheduler}'")
        if self.horizon_s is not None and self.horizon_s <= 0:
            raise ConfigError("horizon_s must be > 0 when present")


@dataclass(frozen=True)
class StepReport:
    clock_s: float
    it_power_w: float
    facility_power_w: float
    loss_w: float
    jobs_started: tuple[str, ...]
    jobs_finished: tuple[str, ...]
    util_fraction: float
    running_jobs: int
    queued_jobs: int
    carbon_g: float


@dataclass(frozen=True)
class JobStats:
    job_id: str
    submit_time_s: float
    start_time_s: float
    end_time_s: float
    wait_s: float
    run_s: float
    slowdown: float


@dataclass(frozen=True)
class SimSummary:
    scheduler: str
    mode: str
    seed: Optional[int]
    delta_s: float
    horizon_s: Optional[float]
    steps: int
    truncated: bool
    jobs_total: int
    jobs_unfinished: int
    metrics: SimMetrics
    history: tuple[StepReport, ...]
    job_stats: tuple[JobStats, ...]

    def to_dict(self) -> dict:
        out = {
            "schema_version": 1,
            "scheduler": self.scheduler,
            "mode": self.mode,
            "seed": self.seed,
            "delta_s": self.delta_s,
            "horizon_s": self.horizon_s,
            "steps": self.steps,
            "truncated": self.truncated,
            "jobs_total": self.jobs_total,
            "jobs_unfinished": self.jobs_unfinished,
        }
        out.update(self.metrics.to_dict())
        return out


@dataclass
class _Running:
    record: JobRecord
    placements: dict
    start_time_s: float
    elapsed_s: float = 0.0

    @property
    def end_time_s(self) -> float:
        return self.start_time_s + self.record.walltime_s


class Engine:
    """One simulation instance; strictly single-threaded and deterministic."""

    def __init__(self, jobs: Sequence[JobRecord], cluster: ClusterConfig, config: SimConfig):
        self.cluster = cluster
        self.config = config
        self.policy = POLICIES[config.scheduler]
        if config.mode == "replay":
            for job in jobs:
                if job.trace_start_time_s is None:
                    raise ConfigError(
                        f"replay mode: job {job.job_id} is missing trace_start_time_s")
        # Load-time normalization: series resampled to the engine delta and
        # walltimes rounded up to the step grid so policy predictions match
        # actual completions exactly.
        delta = config.delta_s
        self.jobs = []
        for job in jobs:
            stepped = math.ceil(job.walltime_s / delta - _EPS) * delta
            record = resample_record(job, delta)
            if stepped != record.walltime_s:
                record = replace(record, walltime_s=stepped)
            self.jobs.append(record)
        self.pending: list[JobRecord] = sorted(self.jobs, key=lambda j: (j.submit_time_s, j.job_id))
        self.queue: list[JobRecord] = []
        self.running: dict[str, _Running] = {}
        self.pool = ResourcePool(cluster)
        self.metrics = MetricsAccumulator()
        self.history: list[StepReport] = []
        self.job_stats: list[JobStats] = []
        self.clock_s = 0.0
        self.steps = 0
        self.rated_power_w = cluster.efficiency_chain.rated_power_w or cluster.rated_power_w
        self._node_count = len(cluster.nodes)
        self._head_reservations: dict[str, float] = {}

    # -- state queries -------------------------------------------------

    @property
    def drained(self) -> bool:
        return not (self.pending or self.queue or self.running)

    @property
    def horizon_reached(self) -> bool:
        return (self.config.horizon_s is not None
                and self.clock_s >= self.config.horizon_s - _EPS)

    @property
    def finished(self) -> bool:
        return self.drained or self.horizon_reached

    def absorb_arrivals(self) -> None:
        """Move every pending job with submit_time_s <= clock into the queue."""
        moved = False
        while self.pending and self.pending[0].submit_time_s <= self.clock_s + _EPS:
            self.queue.append(self.pending.pop(0))
            moved = True
        if moved:
            self.queue.sort(key=lambda j: (j.submit_time_s, j.job_id))

    def running_infos(self) -> list[RunningInfo]:
        return [RunningInfo(job_id=r.record.job_id, placements=r.placements,
                            end_time_s=r.end_time_s)
                for r in self.running.values()]

    # -- the step ------------------------------------------------------

    def step(self, decisions: Optional[Sequence[ScheduleDecision]] = None) -> StepReport:
        """Advance one delta.  `decisions` overrides the policy (RL driving)."""
        clock = self.clock_s
        self.absorb_arrivals()

        if decisions is None:
            result = self.policy(self.queue, self.pool.free_map(), self.running_infos(),
                                 clock, self.cluster)
            decisions = result.decisions
            if result.head_reservation is not None:
                job_id, res = result.head_reservation
                prev = self._head_reservations.get(job_id)
                self._head_reservations[job_id] = res if prev is None else min(prev, res)

        started = []
        by_id = {job.job_id: job for job in self.queue}
        for decision in decisions:
            job = by_id.get(decision.job_id)
            if job is None:
                raise SchedulerViolation(f"decision for job {decision.job_id} not in queue")
            if len(decision.placements) != job.node_count or any(
                    share != job.requested for share in decision.placements.values()):
                raise SchedulerViolation(
                    f"decision for job {job.job_id} does not match requested x node_count")
            self._assert_start_legal(job, clock)
            try:
                self.pool.allocate(job.job_id, decision.placements, clock)
            except CapacityViolation as exc:
                raise SchedulerViolation(str(exc)) from exc
            self.queue.remove(job)
            self.running[job.job_id] = _Running(record=job, placements=dict(decision.placements),
                                                start_time_s=clock)
            self._head_reservations.pop(job.job_id, None)
            started.append(job.job_id)

        # Snapshot jobs active during [clock, clock+delta) before completions.
        delta = self.config.delta_s
        active = [(r.record, r.placements, int(round(r.elapsed_s / delta)))
                  for r in self.running.values()]

        finished = []
        for run in list(self.running.values()):
            run.elapsed_s += delta
            if run.elapsed_s >= run.record.walltime_s - _EPS:
                end = clock + delta
                wait = run.start_time_s - run.record.submit_time_s
                run_time = end - run.start_time_s
                value = self.metrics.add_finished_job(wait, run_time)
                self.job_stats.append(JobStats(
                    job_id=run.record.job_id, submit_time_s=run.record.submit_time_s,
                    start_time_s=run.start_time_s, end_time_s=end,
                    wait_s=wait, run_s=run_time, slowdown=value))
                self.pool.release(run.record.job_id)
                del self.running[run.record.job_id]
                finished.append(run.record.job_id)

        it_power, busy_nodes = self._compute_it_power(active)
        chain_input, loss = apply_chain(it_power, self.cluster.efficiency_chain, self.rated_power_w)
        facility = facility_power(chain_input, self.cluster.pue)
        intensity = self.config.carbon.at(clock)
        self.metrics.add_power_step(it_power, chain_input, facility, delta, intensity)
        self.metrics.gflops_seconds += sum(
            (rec.gflops_estimate or 0.0) * delta for rec, _, _ in active)
        self.metrics.busy_node_seconds += busy_nodes * delta
        self.metrics.total_node_seconds += self._node_count * delta

        report = StepReport(
            clock_s=clock,
            it_power_w=it_power,
            facility_power_w=facility,
            loss_w=loss,
            jobs_started=tuple(started),
            jobs_finished=tuple(finished),
            util_fraction=busy_nodes / self._node_count if self._node_count else 0.0,
            running_jobs=len(active),
            queued_jobs=len(self.queue),
            carbon_g=facility * delta * intensity / 3.6e6,
        )
        self.history.append(report)
        self.clock_s = clock + delta
        self.steps += 1
        self.pool.check_invariants()
        return report

    def _assert_start_legal(self, job: JobRecord, clock: float) -> None:
        if clock < job.submit_time_s - _EPS:
            raise SchedulerViolation(
                f"job {job.job_id} started at t={clock} before submit {job.submit_time_s}")
        if self.config.mode == "replay":
            trace_start = job.trace_start_time_s
            expected = math.ceil(trace_start / self.config.delta_s - _EPS) * self.config.delta_s
            if abs(clock - expected) > _EPS:
                raise SchedulerViolation(
                    f"replay: job {job.job_id} started at t={clock}, trace start is {trace_start}")
        reservation = self._head_reservations.get(job.job_id)
        if reservation is not None and clock > reservation + _EPS:
            raise SchedulerViolation(
                f"EASY safety: job {job.job_id} started at t={clock} past reservation {reservation}")

    def _compute_it_power(self, active) -> tuple[float, int]:
        """Total IT power plus the count of nodes hosting at least one tenant.

        In replay mode a job with a measured power series contributes that
        value directly and its nodes are excluded from the idle floor; the
        linear model covers everything else.
        """
        measured_total = 0.0
        covered = set()
        busy = set()
        tenants_by_node: dict[str, list] = {}
        for record, placements, cursor in active:
            busy.update(placements)
            series = record.series
            if self.config.mode == "replay" and series.measured_power_w:
                idx = min(cursor, len(series.measured_power_w) - 1)
                measured_total += series.measured_power_w[idx]
                covered.update(placements)
                continue
            cpu = series.cpu_util[min(cursor, len(series.cpu_util) - 1)] if series.cpu_util else 0.0
            gpu = series.gpu_util[min(cursor, len(series.gpu_util) - 1)] if series.gpu_util else 0.0
            for node_id, share in placements.items():
                tenants_by_node.setdefault(node_id, []).append((share, cpu, gpu))
        total = measured_total
        for node in self.cluster.nodes:
            tenants = tenants_by_node.get(node.node_id)
            if tenants:
                total += node_power(node, tenants)
            elif node.node_id not in covered:
                total += node.idle_power_w
        return total, len(busy)

    # -- the loop ------------------------------------------------------

    def run(self) -> SimSummary:
        if not self.jobs and self.config.horizon_s is None:
            raise ConfigError("nothing to simulate: workload is empty and no horizon_s set")
        fast_guard = self.config.scheduler in ("fcfs", "easy") and self.config.horizon_s is None
        while not self.finished:
            if self.clock_s > self.config.starvation_cap_s:
                raise StarvationGuard(
                    f"clock exceeded starvation cap {self.config.starvation_cap_s}")
            idle_before = not self.running and not self.pending
            report = self.step()
            if fast_guard and idle_before and not report.jobs_started and self.queue:
                # The scheduler saw the fully free cluster and still could not
                # place the head job, so it never will.
                raise StarvationGuard(
                    f"job {self.queue[0].job_id} can never be scheduled "
                    f"(request exceeds available capacity)")
        return self.summary()

    def summary(self) -> SimSummary:
        unfinished = len(self.pending) + len(self.queue) + len(self.running)
        metrics = finalize_metrics(self.metrics, self.clock_s)
        return SimSummary(
            scheduler=self.config.scheduler,
            mode=self.config.mode,
            seed=self.config.seed,
            delta_s=self.config.delta_s,
            horizon_s=self.config.horizon_s,
            steps=self.steps,
            truncated=bool(unfinished) and self.horizon_reached,
            jobs_total=len(self.jobs),
            jobs_unfinished=unfinished,
            metrics=metrics,
            history=tuple(self.history),
            job_stats=tuple(sorted(self.job_stats, key=lambda s: s.job_id)),
        )


def run(jobs: Sequence[JobRecord], cluster: ClusterConfig, config: SimConfig) -> SimSummary:
    """Build an engine and run it to completion."""
    return Engine(jobs, cluster, config).run()
