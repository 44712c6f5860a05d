"""Discrete-time cluster power and scheduling simulator."""

__version__ = "0.1.0"

from .cluster import (Allocation, ClusterConfig, Node, Partition, ResourcePool,
                      ResourceVector, fits, load_cluster)
from .engine import Engine, SimConfig, SimSummary, StepReport, run
from .power import (CarbonIntensity, EfficiencyChain, EfficiencyStage,
                    MetricsAccumulator, RewardWeights, apply_chain, facility_power,
                    finalize_metrics, node_power, slowdown)
from .schedulers import POLICIES, ScheduleDecision, SchedulerResult, easy_backfill, fcfs, replay
from .workload import (JobRecord, SynthParams, UtilizationSeries, generate_synthetic,
                       load_trace_dir, parse_trace, resample)

__all__ = [
    "Allocation", "ClusterConfig", "Node", "Partition", "ResourcePool", "ResourceVector",
    "fits", "load_cluster", "Engine", "SimConfig", "SimSummary", "StepReport", "run",
    "CarbonIntensity", "EfficiencyChain", "EfficiencyStage", "MetricsAccumulator",
    "RewardWeights", "apply_chain", "facility_power", "finalize_metrics", "node_power",
    "slowdown", "POLICIES", "ScheduleDecision", "SchedulerResult", "easy_backfill",
    "fcfs", "replay", "JobRecord", "SynthParams", "UtilizationSeries",
    "generate_synthetic", "load_trace_dir", "parse_trace", "resample",
]
