from pathlib import Path

import pytest

from clustersim import (ClusterConfig, EfficiencyChain, EfficiencyStage, JobRecord, Node,
                        Partition, ResourceVector, UtilizationSeries, load_cluster,
                        load_trace_dir)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def make_cluster(capacities, idle_w=100.0, max_w=300.0, gpu_idle_w=10.0, gpu_max_w=100.0,
                 pue=1.0, stages=(), rated_power_w=None):
    """Single-partition cluster from a list of (cores, gpus, memory_mb) tuples."""
    nodes = tuple(
        Node(node_id=f"n{i + 1}", partition="main",
             capacity=ResourceVector(cores=c, gpus=g, memory_mb=m),
             idle_power_w=idle_w, max_power_w=max_w,
             gpu_idle_power_w=gpu_idle_w if g else 0.0,
             gpu_max_power_w=gpu_max_w if g else 0.0)
        for i, (c, g, m) in enumerate(capacities))
    chain = EfficiencyChain(
        stages=tuple(EfficiencyStage(name=f"s{i}", points=tuple(points))
                     for i, points in enumerate(stages)),
        rated_power_w=rated_power_w)
    return ClusterConfig(
        partitions=(Partition(name="main", node_ids=tuple(n.node_id for n in nodes)),),
        nodes=nodes,
        efficiency_chain=chain,
        pue=pue)


def make_job(job_id, submit=0.0, cores=1, gpus=0, memory_mb=0, node_count=1, walltime=10.0,
             cpu_util=1.0, gpu_util=0.0, quanta=1.0, trace_start=None, trace_nodes=None,
             gflops=None, measured_power=None):
    samples = max(1, int(round(walltime / quanta)))
    series = UtilizationSeries(
        quanta_s=quanta,
        cpu_util=(cpu_util,) * samples,
        gpu_util=(gpu_util,) * samples if gpus else (),
        measured_power_w=tuple(measured_power) if measured_power is not None else None)
    return JobRecord(
        job_id=job_id, submit_time_s=float(submit),
        requested=ResourceVector(cores=cores, gpus=gpus, memory_mb=memory_mb),
        node_count=node_count, walltime_s=float(walltime), series=series,
        trace_start_time_s=trace_start,
        trace_nodes=tuple(trace_nodes) if trace_nodes else None,
        gflops_estimate=gflops)


@pytest.fixture(scope="session")
def sample_cluster():
    return load_cluster(DATA_DIR / "sample_cluster.json")


@pytest.fixture(scope="session")
def sample_trace_jobs():
    return load_trace_dir(DATA_DIR / "sample_trace")
