"""Pluggable scheduling policies: replay, FCFS, and FCFS with EASY backfill.

All policies are pure functions of (queue, free resources, running set, clock)
and return the jobs to start right now.  Node selection is first-fit in
cluster config order; queues are kept in (submit_time_s, job_id) order so
every run is fully deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .cluster import ClusterConfig, ResourceVector, fits
from .errors import SchedulerViolation
from .workload import JobRecord


@dataclass(frozen=True)
class ScheduleDecision:
    job_id: str
    placements: dict[str, ResourceVector]


@dataclass(frozen=True)
class RunningInfo:
    """What a policy may assume about a running job: where it sits and when it frees."""
    job_id: str
    placements: dict[str, ResourceVector]
    end_time_s: float


@dataclass(frozen=True)
class SchedulerResult:
    decisions: tuple[ScheduleDecision, ...]
    head_reservation: Optional[tuple[str, float]] = None  # (job_id, earliest start)


def first_fit(job: JobRecord, free: dict[str, ResourceVector],
              node_order: Sequence[str]) -> Optional[dict[str, ResourceVector]]:
    """First node_count nodes (in config order) that each fit the per-node request."""
    chosen = []
    for node_id in node_order:
        if fits(free[node_id], job.requested):
            chosen.append(node_id)
            if len(chosen) == job.node_count:
                return {nid: job.requested for nid in chosen}
    return None


def _commit(free: dict[str, ResourceVector], placements: dict[str, ResourceVector]) -> None:
    for node_id, share in placements.items():
        free[node_id] = free[node_id] - share


def _uncommit(free: dict[str, ResourceVector], placements: dict[str, ResourceVector]) -> None:
    for node_id, share in placements.items():
        free[node_id] = free[node_id] + share


def fcfs(queue: Sequence[JobRecord], free: dict[str, ResourceVector],
         running: Sequence[RunningInfo], clock: float,
         cluster: ClusterConfig) -> SchedulerResult:
    """Strict submit-order dispatch; blocks on the first job that does not fit."""
    node_order = [n.node_id for n in cluster.nodes]
    working = dict(free)
    decisions = []
    for job in queue:
        placements = first_fit(job, working, node_order)
        if placements is None:
            break
        _commit(working, placements)
        decisions.append(ScheduleDecision(job_id=job.job_id, placements=placements))
    return SchedulerResult(decisions=tuple(decisions))


def _earliest_fit_time(job: JobRecord, free: dict[str, ResourceVector],
                       releases: Sequence[tuple[float, dict[str, ResourceVector]]],
                       clock: float, node_order: Sequence[str]) -> Optional[float]:
    """Earliest time >= clock at which the job fits, given future releases.

    Releases only add resources, so sweeping event times in order is exact.
    Returns None when the job does not fit even with everything drained.
    """
    state = dict(free)
    if first_fit(job, state, node_order) is not None:
        return clock
    for when, placements in sorted(releases, key=lambda r: r[0]):
        _uncommit(state, placements)
        if first_fit(job, state, node_order) is not None:
            return when
    return None


def easy_backfill(queue: Sequence[JobRecord], free: dict[str, ResourceVector],
                  running: Sequence[RunningInfo], clock: float,
                  cluster: ClusterConfig) -> SchedulerResult:
    """FCFS plus EASY backfill: only the queue head holds a reservation.

    After the FCFS pass blocks on head job H, H's reservation R is the
    earliest time it fits given predicted completions (start + walltime).
    A later job backfills only if it fits now and placing it leaves H able
    to start by R, checked against the full resource profile up to R.
    """
    node_order = [n.node_id for n in cluster.nodes]
    working = dict(free)
    walltimes = {job.job_id: job.walltime_s for job in queue}
    releases: list[tuple[float, dict[str, ResourceVector]]] = [
        (info.end_time_s, info.placements) for info in running]
    decisions = []

    blocked_at = None
    for idx, job in enumerate(queue):
        placements = first_fit(job, working, node_order)
        if placements is None:
            blocked_at = idx
            break
        _commit(working, placements)
        releases.append((clock + job.walltime_s, placements))
        decisions.append(ScheduleDecision(job_id=job.job_id, placements=placements))
    if blocked_at is None:
        return SchedulerResult(decisions=tuple(decisions))

    head = queue[blocked_at]
    reservation = _earliest_fit_time(head, working, releases, clock, node_order)

    for job in queue[blocked_at + 1:]:
        placements = first_fit(job, working, node_order)
        if placements is None:
            continue
        _commit(working, placements)
        candidate_releases = releases + [(clock + job.walltime_s, placements)]
        if reservation is not None:
            delayed = _earliest_fit_time(head, working, candidate_releases, clock, node_order)
            if delayed is None or delayed > reservation:
                _uncommit(working, placements)
                continue
        releases = candidate_releases
        decisions.append(ScheduleDecision(job_id=job.job_id, placements=placements))

    head_res = (head.job_id, reservation) if reservation is not None else None
    return SchedulerResult(decisions=tuple(decisions), head_reservation=head_res)


def replay(queue: Sequence[JobRecord], free: dict[str, ResourceVector],
           running: Sequence[RunningInfo], clock: float,
           cluster: ClusterConfig) -> SchedulerResult:
    """Start exactly the jobs whose recorded start time has arrived.

    Recorded placements are used when present; otherwise first-fit.  A due
    job that cannot be placed means the trace does not fit the cluster.
    """
    node_order = [n.node_id for n in cluster.nodes]
    working = dict(free)
    decisions = []
    due = [job for job in queue if job.trace_start_time_s is not None
           and job.trace_start_time_s <= clock]
    due.sort(key=lambda j: (j.trace_start_time_s, j.job_id))
    for job in due:
        if job.trace_nodes is not None:
            placements = {nid: job.requested for nid in job.trace_nodes}
            for nid, share in placements.items():
                if nid not in working or not fits(working[nid], share):
                    raise SchedulerViolation(
                        f"replay: job {job.job_id} does not fit on recorded node {nid} at t={clock}")
        else:
            placements = first_fit(job, working, node_order)
            if placements is None:
                raise SchedulerViolation(
                    f"replay: no capacity for job {job.job_id} at recorded start t={clock}")
        _commit(working, placements)
        decisions.append(ScheduleDecision(job_id=job.job_id, placements=placements))
    return SchedulerResult(decisions=tuple(decisions))


POLICIES = {
    "fcfs": fcfs,
    "easy": easy_backfill,
    "replay": replay,
}
