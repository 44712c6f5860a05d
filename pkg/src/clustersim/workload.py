"""Trace ingestion, utilization resampling and synthetic workload generation.

Canonical trace layout (see README):
  jobs.csv             header: job_id,submit_time_s,node_count,cores,gpus,
                       memory_mb,walltime_s,trace_start_time_s,trace_nodes,
                       gflops_estimate
  telemetry/<id>.csv   header: job_id,quanta_s,kind,values
                       kind in {cpu_util, gpu_util, power_w}, values are
                       ';'-separated decimals sampled at quanta_s.

Telemetry series keep their native quanta at parse time; the engine resamples
them to its time delta when a simulation is loaded.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cluster import ResourceVector
from .errors import NonIntegerRatio, RangeError, SchemaError

log = logging.getLogger(__name__)

JOB_TABLE_HEADER = ["job_id", "submit_time_s", "node_count", "cores", "gpus", "memory_mb",
                    "walltime_s", "trace_start_time_s", "trace_nodes", "gflops_estimate"]
TELEMETRY_HEADER = ["job_id", "quanta_s", "kind", "values"]
TELEMETRY_KINDS = ("cpu_util", "gpu_util", "power_w")


@dataclass(frozen=True)
class UtilizationSeries:
    quanta_s: float
    cpu_util: tuple[float, ...] = ()
    gpu_util: tuple[float, ...] = ()
    measured_power_w: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.quanta_s <= 0:
            raise SchemaError(f"quanta_s must be > 0, got {self.quanta_s}")
        for name in ("cpu_util", "gpu_util"):
            for v in getattr(self, name):
                if not (0.0 <= v <= 1.0):
                    raise RangeError(f"{name} value {v} outside [0,1]")
        if self.measured_power_w is not None:
            for v in self.measured_power_w:
                if v < 0:
                    raise RangeError(f"measured_power_w value {v} must be >= 0")
            if len(self.measured_power_w) != len(self.cpu_util):
                raise SchemaError("measured_power_w must have the same length as cpu_util")


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    submit_time_s: float
    requested: ResourceVector  # per node
    node_count: int
    walltime_s: float
    series: UtilizationSeries
    trace_start_time_s: Optional[float] = None
    trace_nodes: Optional[tuple[str, ...]] = None
    gflops_estimate: Optional[float] = None

    def __post_init__(self):
        if self.submit_time_s < 0:
            raise SchemaError(f"job {self.job_id}: submit_time_s must be >= 0")
        if self.node_count < 1:
            raise SchemaError(f"job {self.job_id}: node_count must be >= 1")
        if self.walltime_s <= 0:
            raise SchemaError(f"job {self.job_id}: walltime_s must be > 0")
        has_samples = (self.series.cpu_util or self.series.gpu_util
                       or self.series.measured_power_w)
        if not has_samples and self.walltime_s < self.series.quanta_s:
            raise SchemaError(
                f"job {self.job_id}: needs walltime_s >= quanta_s or a non-empty series")
        if self.trace_start_time_s is not None and self.trace_start_time_s < self.submit_time_s:
            raise SchemaError(f"job {self.job_id}: trace_start_time_s must be >= submit_time_s")
        if self.trace_nodes is not None and len(self.trace_nodes) != self.node_count:
            raise SchemaError(f"job {self.job_id}: trace_nodes length must equal node_count")


def _integer_ratio(numerator: float, denominator: float) -> Optional[int]:
    ratio = numerator / denominator
    k = round(ratio)
    if k >= 1 and abs(ratio - k) <= 1e-9 * max(1.0, k):
        return k
    return None


def _hold(values: Sequence[float], k: int) -> tuple[float, ...]:
    return tuple(v for v in values for _ in range(k))


def _block_mean(values: Sequence[float], k: int) -> tuple[float, ...]:
    # Trailing partial blocks are zero-extended so utilization-seconds are
    # conserved; constant full blocks pass through exactly.
    out = []
    for i in range(0, len(values), k):
        block = values[i:i + k]
        if len(block) == k and min(block) == max(block):
            out.append(block[0])
        else:
            out.append(sum(block) / k)
    return tuple(out)


def resample(series: UtilizationSeries, target_delta_s: float) -> UtilizationSeries:
    """Piecewise-constant hold when refining, block mean when coarsening.

    Only integer quanta/delta ratios are supported; the sum of value*interval
    is conserved either way.
    """
    if target_delta_s <= 0:
        raise SchemaError(f"target_delta_s must be > 0, got {target_delta_s}")
    if abs(series.quanta_s - target_delta_s) <= 1e-12 * max(series.quanta_s, target_delta_s):
        return series
    if target_delta_s < series.quanta_s:
        k = _integer_ratio(series.quanta_s, target_delta_s)
        if k is None:
            raise NonIntegerRatio(
                f"quanta_s {series.quanta_s} / target_delta_s {target_delta_s} is not an integer")
        convert = lambda values: _hold(values, k)
    else:
        k = _integer_ratio(target_delta_s, series.quanta_s)
        if k is None:
            raise NonIntegerRatio(
                f"target_delta_s {target_delta_s} / quanta_s {series.quanta_s} is not an integer")
        convert = lambda values: _block_mean(values, k)
    return UtilizationSeries(
        quanta_s=target_delta_s,
        cpu_util=convert(series.cpu_util),
        gpu_util=convert(series.gpu_util),
        measured_power_w=convert(series.measured_power_w) if series.measured_power_w is not None else None,
    )


def resample_record(job: JobRecord, target_delta_s: float) -> JobRecord:
    return replace(job, series=resample(job.series, target_delta_s))


def _parse_optional_float(value: str) -> Optional[float]:
    value = value.strip()
    return float(value) if value else None


def _read_telemetry_rows(paths: Sequence[str | Path]) -> dict[str, dict[str, tuple[float, list[float]]]]:
    """Returns job_id -> kind -> (quanta_s, values); same-kind rows concatenate."""
    by_job: dict[str, dict[str, tuple[float, list[float]]]] = {}
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != TELEMETRY_HEADER:
                raise SchemaError(f"telemetry {path}: header must be '{','.join(TELEMETRY_HEADER)}'")
            for row in reader:
                kind = row["kind"].strip()
                if kind not in TELEMETRY_KINDS:
                    raise SchemaError(f"telemetry {path}: unknown kind '{kind}'")
                quanta = float(row["quanta_s"])
                if quanta <= 0:
                    raise SchemaError(f"telemetry {path}: quanta_s must be > 0")
                values = [float(v) for v in row["values"].split(";") if v.strip() != ""]
                kinds = by_job.setdefault(row["job_id"], {})
                if kind in kinds:
                    prev_quanta, prev_values = kinds[kind]
                    if prev_quanta != quanta:
                        raise SchemaError(
                            f"telemetry {path}: job {row['job_id']} kind {kind} has mixed quanta_s")
                    prev_values.extend(values)
                else:
                    kinds[kind] = (quanta, values)
    return by_job


def _pad_hold(values: tuple[float, ...], length: int) -> tuple[float, ...]:
    if not values or len(values) >= length:
        return values
    return values + (values[-1],) * (length - len(values))


def _build_series(job_id: str, kinds: dict[str, tuple[float, list[float]]]) -> UtilizationSeries:
    for kind, (_, values) in kinds.items():
        if kind in ("cpu_util", "gpu_util"):
            for v in values:
                if not (0.0 <= v <= 1.0):
                    raise RangeError(f"job {job_id}: {kind} value {v} outside [0,1]")
    if "cpu_util" in kinds:
        base_quanta = kinds["cpu_util"][0]
    elif "gpu_util" in kinds:
        base_quanta = kinds["gpu_util"][0]
    else:
        base_quanta = kinds["power_w"][0]

    def at_base(kind: str) -> tuple[float, ...]:
        if kind not in kinds:
            return ()
        quanta, values = kinds[kind]
        if quanta == base_quanta:
            return tuple(values)
        if quanta > base_quanta:
            k = _integer_ratio(quanta, base_quanta)
            if k is None:
                raise NonIntegerRatio(f"job {job_id}: {kind} quanta {quanta} vs {base_quanta}")
            return _hold(values, k)
        k = _integer_ratio(base_quanta, quanta)
        if k is None:
            raise NonIntegerRatio(f"job {job_id}: {kind} quanta {quanta} vs {base_quanta}")
        return _block_mean(values, k)

    cpu = at_base("cpu_util")
    gpu = at_base("gpu_util")
    power = at_base("power_w") if "power_w" in kinds else None
    if power is not None:
        if not cpu:
            cpu = (0.0,) * len(power)
        length = max(len(cpu), len(power))
        cpu = _pad_hold(cpu, length)
        power = _pad_hold(power, length)
    return UtilizationSeries(quanta_s=base_quanta, cpu_util=cpu, gpu_util=gpu,
                             measured_power_w=power)


def parse_trace(job_table: str | Path, telemetry_files: Sequence[str | Path] = ()) -> list[JobRecord]:
    """Load the canonical job table plus per-job telemetry into JobRecords.

    Records come back sorted by (submit_time_s, job_id); telemetry rows for
    unknown jobs are warned about and skipped.
    """
    with open(job_table, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != JOB_TABLE_HEADER:
            missing = set(JOB_TABLE_HEADER) - set(reader.fieldnames or [])
            if missing:
                raise SchemaError(f"job table {job_table}: missing column '{sorted(missing)[0]}'")
            raise SchemaError(f"job table {job_table}: header must be '{','.join(JOB_TABLE_HEADER)}'")
        rows = list(reader)

    telemetry = _read_telemetry_rows(telemetry_files)
    known_ids = {row["job_id"] for row in rows}
    for orphan in sorted(set(telemetry) - known_ids):
        log.warning("telemetry for unknown job_id %s: skipped", orphan)

    records = []
    seen = set()
    for row in rows:
        job_id = row["job_id"]
        if job_id in seen:
            raise SchemaError(f"job table {job_table}: duplicate job_id {job_id}")
        seen.add(job_id)
        trace_nodes_raw = (row.get("trace_nodes") or "").strip()
        trace_nodes = tuple(n for n in trace_nodes_raw.split(";") if n) if trace_nodes_raw else None
        kinds = telemetry.get(job_id)
        if kinds:
            series = _build_series(job_id, kinds)
        else:
            series = UtilizationSeries(quanta_s=1.0, cpu_util=(1.0,))
        records.append(JobRecord(
            job_id=job_id,
            submit_time_s=float(row["submit_time_s"]),
            requested=ResourceVector(cores=int(row["cores"] or 0), gpus=int(row["gpus"] or 0),
                                     memory_mb=int(row["memory_mb"] or 0)),
            node_count=int(row["node_count"]),
            walltime_s=float(row["walltime_s"]),
            series=series,
            trace_start_time_s=_parse_optional_float(row.get("trace_start_time_s") or ""),
            trace_nodes=trace_nodes,
            gflops_estimate=_parse_optional_float(row.get("gflops_estimate") or ""),
        ))
    records.sort(key=lambda r: (r.submit_time_s, r.job_id))
    return records


def load_trace_dir(trace_dir: str | Path) -> list[JobRecord]:
    """Trace directory layout: <dir>/jobs.csv plus <dir>/telemetry/*.csv."""
    trace_dir = Path(trace_dir)
    job_table = trace_dir / "jobs.csv"
    if not job_table.is_file():
        raise SchemaError(f"trace dir {trace_dir}: missing jobs.csv")
    telemetry = sorted((trace_dir / "telemetry").glob("*.csv")) if (trace_dir / "telemetry").is_dir() else []
    return parse_trace(job_table, telemetry)


@dataclass(frozen=True)
class SynthParams:
    job_count: int
    arrival_rate_per_s: float
    runtime_log_mean: float
    runtime_log_sigma: float
    seed: int = 0
    max_nodes: int = 1
    max_cores: int = 8
    max_gpus: int = 0
    max_memory_mb: int = 32768
    cpu_util_min: float = 0.2
    cpu_util_max: float = 1.0
    gpu_util_min: float = 0.0
    gpu_util_max: float = 1.0
    gflops_per_core: float = 0.0
    quanta_s: float = 10.0

    def __post_init__(self):
        if self.job_count < 1:
            raise SchemaError(f"job_count must be >= 1, got {self.job_count}")
        if self.arrival_rate_per_s <= 0:
            raise SchemaError("arrival_rate_per_s must be > 0")
        if self.runtime_log_sigma < 0:
            raise SchemaError("runtime_log_sigma must be >= 0")
        if self.max_nodes < 1 or self.max_cores < 1:
            raise SchemaError("max_nodes and max_cores must be >= 1")
        if not (0.0 <= self.cpu_util_min <= self.cpu_util_max <= 1.0):
            raise RangeError("cpu utilization bounds must satisfy 0 <= min <= max <= 1")
        if not (0.0 <= self.gpu_util_min <= self.gpu_util_max <= 1.0):
            raise RangeError("gpu utilization bounds must satisfy 0 <= min <= max <= 1")
        if self.quanta_s <= 0:
            raise SchemaError("quanta_s must be > 0")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthParams":
        fields = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - fields
        if unknown:
            raise SchemaError(f"synth params: unknown field '{sorted(unknown)[0]}'")
        missing = {"job_count", "arrival_rate_per_s", "runtime_log_mean", "runtime_log_sigma"} - set(data)
        if missing:
            raise SchemaError(f"synth params: missing field '{sorted(missing)[0]}'")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthParams":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"synth params {path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


def generate_synthetic(params: SynthParams, seed: Optional[int] = None) -> list[JobRecord]:
    """Poisson arrivals, lognormal runtimes, flat utilization per job.

    A pure function of (params, seed): the same inputs reproduce the job list
    byte-for-byte.  `seed` overrides params.seed when given.
    """
    rng = np.random.default_rng(params.seed if seed is None else seed)
    width = max(4, len(str(params.job_count)))
    records = []
    clock = 0.0
    for i in range(params.job_count):
        clock += float(rng.exponential(1.0 / params.arrival_rate_per_s))
        walltime = float(rng.lognormal(mean=params.runtime_log_mean, sigma=params.runtime_log_sigma))
        walltime = max(walltime, 1.0)
        node_count = int(rng.integers(1, params.max_nodes + 1))
        cores = int(rng.integers(1, params.max_cores + 1))
        gpus = int(rng.integers(0, params.max_gpus + 1)) if params.max_gpus > 0 else 0
        memory_mb = int(rng.integers(1, params.max_memory_mb + 1))
        cpu_level = float(rng.uniform(params.cpu_util_min, params.cpu_util_max))
        gpu_level = float(rng.uniform(params.gpu_util_min, params.gpu_util_max)) if gpus > 0 else 0.0
        samples = max(1, math.ceil(walltime / params.quanta_s))
        gflops = params.gflops_per_core * cores * node_count * cpu_level if params.gflops_per_core > 0 else None
        records.append(JobRecord(
            job_id=f"synth-{i:0{width}d}",
            submit_time_s=clock,
            requested=ResourceVector(cores=cores, gpus=gpus, memory_mb=memory_mb),
            node_count=node_count,
            walltime_s=walltime,
            series=UtilizationSeries(
                quanta_s=params.quanta_s,
                cpu_util=(cpu_level,) * samples,
                gpu_util=(gpu_level,) * samples if gpus > 0 else (),
            ),
            gflops_estimate=gflops,
        ))
    return records


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace(records: Sequence[JobRecord], out_dir: str | Path) -> None:
    """Write records out in the canonical trace layout (jobs.csv + telemetry/)."""
    out_dir = Path(out_dir)
    telemetry_dir = out_dir / "telemetry"
    telemetry_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "jobs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(JOB_TABLE_HEADER)
        for job in records:
            writer.writerow([
                job.job_id,
                _format_value(job.submit_time_s),
                job.node_count,
                job.requested.cores,
                job.requested.gpus,
                job.requested.memory_mb,
                _format_value(job.walltime_s),
                _format_value(job.trace_start_time_s),
                ";".join(job.trace_nodes) if job.trace_nodes else "",
                _format_value(job.gflops_estimate),
            ])
    for job in records:
        with open(telemetry_dir / f"{job.job_id}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TELEMETRY_HEADER)
            series = job.series
            if series.cpu_util:
                writer.writerow([job.job_id, _format_value(series.quanta_s), "cpu_util",
                                 ";".join(repr(v) for v in series.cpu_util)])
            if series.gpu_util:
                writer.writerow([job.job_id, _format_value(series.quanta_s), "gpu_util",
                                 ";".join(repr(v) for v in series.gpu_util)])
            if series.measured_power_w is not None:
                writer.writerow([job.job_id, _format_value(series.quanta_s), "power_w",
                                 ";".join(repr(v) for v in series.measured_power_w)])
