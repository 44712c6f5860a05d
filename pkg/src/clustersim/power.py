"""Utilization-to-power conversion, conversion-loss chain, PUE and metrics.

Node power is a first-order linear model between idle and max draw; GPUs are
modeled per device with their own idle/max parameters.  Conversion stages
(voltage conversion, rectification) are applied inner-to-outer as
P_in = P_out / eta(load), then PUE multiplies the chain input into facility
power.  Energy streams are accumulated in joules and converted once at
finalization so unit arithmetic stays exact.
"""
from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Optional

from .errors import RangeError, SchemaError

if TYPE_CHECKING:  # pragma: no cover
    from .cluster import Node, ResourceVector

JOULES_PER_KWH = 3.6e6


@dataclass(frozen=True)
class EfficiencyStage:
    """One conversion stage: piecewise-linear load fraction -> efficiency."""

    name: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.points:
            raise SchemaError(f"stage {self.name}: needs at least one curve point")
        loads = [p[0] for p in self.points]
        if loads != sorted(loads):
            raise SchemaError(f"stage {self.name}: curve points must be sorted by load")
        for load, eta in self.points:
            if not (0.0 < eta <= 1.0):
                raise RangeError(f"stage {self.name}: efficiency must be in (0,1], got {eta}")

    def efficiency(self, load: float) -> float:
        """Linear interpolation between points, clamped at the endpoints."""
        pts = self.points
        if load <= pts[0][0]:
            return pts[0][1]
        if load >= pts[-1][0]:
            return pts[-1][1]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x0 <= load <= x1:
                if x1 == x0:
                    return y1
                return y0 + (y1 - y0) * (load - x0) / (x1 - x0)
        return pts[-1][1]


@dataclass(frozen=True)
class EfficiencyChain:
    stages: tuple[EfficiencyStage, ...] = ()
    rated_power_w: Optional[float] = None

    @classmethod
    def from_dict(cls, data: dict) -> "EfficiencyChain":
        stages = []
        for raw in data.get("stages", []):
            if "name" not in raw:
                raise SchemaError("efficiency_chain stage: missing field 'name'")
            if "points" not in raw:
                raise SchemaError(f"efficiency_chain stage {raw['name']}: missing field 'points'")
            points = tuple((float(p[0]), float(p[1])) for p in raw["points"])
            stages.append(EfficiencyStage(name=str(raw["name"]), points=points))
        rated = data.get("rated_power_w")
        return cls(stages=tuple(stages), rated_power_w=float(rated) if rated is not None else None)


def node_power(node: "Node", tenants: list[tuple["ResourceVector", float, float]]) -> float:
    """Power draw of one node given its tenants as (share, cpu_util, gpu_util).

    Idle floor plus a linear dynamic term over the utilization-weighted core
    fraction, plus per-GPU idle/max terms for allocated GPUs.  Capped at the
    node's full dynamic range.
    """
    cpu_fraction = 0.0
    gpu_w = 0.0
    for share, cpu_util, gpu_util in tenants:
        if node.capacity.cores > 0:
            cpu_fraction += cpu_util * share.cores / node.capacity.cores
        if share.gpus > 0:
            per_gpu = node.gpu_idle_power_w + (node.gpu_max_power_w - node.gpu_idle_power_w) * min(max(gpu_util, 0.0), 1.0)
            gpu_w += share.gpus * per_gpu
    cpu_fraction = min(cpu_fraction, 1.0)
    gpu_w = min(gpu_w, node.capacity.gpus * node.gpu_max_power_w) if node.capacity.gpus else 0.0
    return node.idle_power_w + (node.max_power_w - node.idle_power_w) * cpu_fraction + gpu_w


def apply_chain(it_power_w: float, chain: EfficiencyChain, rated_power_w: float) -> tuple[float, float]:
    """Pull IT power through the conversion stages; returns (input_w, loss_w)."""
    power = it_power_w
    for stage in chain.stages:
        load = power / rated_power_w if rated_power_w > 0 else 0.0
        power = power / stage.efficiency(load)
    return power, power - it_power_w


def facility_power(chain_input_w: float, pue: float) -> float:
    return chain_input_w * pue


def slowdown(wait_s: float, run_s: float) -> float:
    """Bounded slowdown of one job: (wait + run) / run, >= 1."""
    return (wait_s + run_s) / run_s


def joules_to_kwh(joules: float) -> float:
    return joules / JOULES_PER_KWH


class CarbonIntensity:
    """Grid carbon intensity in gCO2/kWh; constant or piecewise-constant series."""

    def __init__(self, times_s: list[float], values: list[float]):
        if not times_s or len(times_s) != len(values):
            raise SchemaError("carbon intensity: needs matching non-empty time/value lists")
        if list(times_s) != sorted(times_s):
            raise SchemaError("carbon intensity: time_s must be ascending")
        for v in values:
            if v < 0:
                raise RangeError(f"carbon intensity: gco2_per_kwh must be >= 0, got {v}")
        self.times_s = list(times_s)
        self.values = list(values)

    @classmethod
    def constant(cls, gco2_per_kwh: float) -> "CarbonIntensity":
        return cls([0.0], [float(gco2_per_kwh)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "CarbonIntensity":
        times, values = [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["time_s", "gco2_per_kwh"]:
                raise SchemaError(f"carbon csv {path}: header must be 'time_s,gco2_per_kwh'")
            for row in reader:
                times.append(float(row["time_s"]))
                values.append(float(row["gco2_per_kwh"]))
        return cls(times, values)

    def at(self, time_s: float) -> float:
        """Step-function hold; times before the first point use the first value."""
        idx = bisect_right(self.times_s, time_s) - 1
        return self.values[max(idx, 0)]


@dataclass
class RewardWeights:
    w_throughput: float = 1.0
    w_energy: float = 1.0
    w_carbon: float = 0.0
    energy_norm_j: float = 1.0
    carbon_norm_g: float = 100.0

    def __post_init__(self):
        if min(self.w_throughput, self.w_energy, self.w_carbon) < 0:
            raise RangeError("reward weights must be non-negative")
        if self.w_throughput == 0 and self.w_energy == 0 and self.w_carbon == 0:
            raise SchemaError("at least one reward weight must be > 0")
        if self.energy_norm_j <= 0 or self.carbon_norm_g <= 0:
            raise RangeError("reward normalizers must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "RewardWeights":
        known = {"w_throughput", "w_energy", "w_carbon", "energy_norm_j", "carbon_norm_g"}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"reward_weights: unknown field '{sorted(unknown)[0]}'")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass
class MetricsAccumulator:
    """Step-summed energy/carbon/throughput bookkeeping."""

    it_energy_j: float = 0.0
    facility_energy_j: float = 0.0
    loss_energy_j: float = 0.0
    pue_overhead_energy_j: float = 0.0
    carbon_j_g_per_kwh: float = 0.0  # sum of facility_j * intensity; divided once at finalize
    jobs_finished: int = 0
    slowdown_sum: float = 0.0
    gflops_seconds: float = 0.0
    busy_node_seconds: float = 0.0
    total_node_seconds: float = 0.0

    def add_power_step(self, it_w: float, chain_input_w: float, facility_w: float,
                       delta_s: float, intensity_g_per_kwh: float) -> None:
        self.it_energy_j += it_w * delta_s
        self.facility_energy_j += facility_w * delta_s
        self.loss_energy_j += (chain_input_w - it_w) * delta_s
        self.pue_overhead_energy_j += (facility_w - chain_input_w) * delta_s
        self.carbon_j_g_per_kwh += facility_w * delta_s * intensity_g_per_kwh

    def add_finished_job(self, wait_s: float, run_s: float) -> float:
        value = slowdown(wait_s, run_s)
        self.jobs_finished += 1
        self.slowdown_sum += value
        return value

    @property
    def carbon_g(self) -> float:
        return self.carbon_j_g_per_kwh / JOULES_PER_KWH


@dataclass(frozen=True)
class SimMetrics:
    makespan_s: float
    jobs_finished: int
    throughput_jobs_per_s: float
    mean_slowdown: Optional[float]
    it_energy_kwh: float
    facility_energy_kwh: float
    loss_energy_kwh: float
    pue_overhead_energy_kwh: float
    carbon_g: float
    gflops_per_watt: Optional[float]
    utilization: float

    def to_dict(self) -> dict:
        return {
            "makespan_s": self.makespan_s,
            "jobs_finished": self.jobs_finished,
            "throughput_jobs_per_s": self.throughput_jobs_per_s,
            "mean_slowdown": self.mean_slowdown,
            "it_energy_kwh": self.it_energy_kwh,
            "facility_energy_kwh": self.facility_energy_kwh,
            "loss_energy_kwh": self.loss_energy_kwh,
            "pue_overhead_energy_kwh": self.pue_overhead_energy_kwh,
            "carbon_g": self.carbon_g,
            "gflops_per_watt": self.gflops_per_watt,
            "utilization": self.utilization,
        }


def finalize_metrics(acc: MetricsAccumulator, makespan_s: float) -> SimMetrics:
    """Summary metrics from the accumulator; per-job means absent when nothing finished."""
    throughput = acc.jobs_finished / makespan_s if makespan_s > 0 else 0.0
    mean_sd = acc.slowdown_sum / acc.jobs_finished if acc.jobs_finished > 0 else None
    gflops_per_w = acc.gflops_seconds / acc.it_energy_j if acc.it_energy_j > 0 else None
    utilization = acc.busy_node_seconds / acc.total_node_seconds if acc.total_node_seconds > 0 else 0.0
    return SimMetrics(
        makespan_s=makespan_s,
        jobs_finished=acc.jobs_finished,
        throughput_jobs_per_s=throughput,
        mean_slowdown=mean_sd,
        it_energy_kwh=joules_to_kwh(acc.it_energy_j),
        facility_energy_kwh=joules_to_kwh(acc.facility_energy_j),
        loss_energy_kwh=joules_to_kwh(acc.loss_energy_j),
        pue_overhead_energy_kwh=joules_to_kwh(acc.pue_overhead_energy_j),
        carbon_g=acc.carbon_g,
        gflops_per_watt=gflops_per_w,
        utilization=utilization,
    )


def load_carbon_intensity(value) -> CarbonIntensity:
    """Accepts a number, a CarbonIntensity, or a CSV path."""
    if isinstance(value, CarbonIntensity):
        return value
    if isinstance(value, (int, float)):
        return CarbonIntensity.constant(float(value))
    if isinstance(value, (str, Path)):
        text = str(value)
        try:
            return CarbonIntensity.constant(float(text))
        except ValueError:
            return CarbonIntensity.from_csv(text)
    raise SchemaError(f"carbon_intensity: expected number or csv path, got {type(value).__name__}")
