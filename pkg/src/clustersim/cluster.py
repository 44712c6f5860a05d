"""Heterogeneous cluster description and multi-tenant resource accounting.

Resources are granted in whole cores and whole GPUs plus memory in MB; a job
may span several nodes and share each node with other jobs.  All capacity
checks are exact integer comparisons.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import CapacityViolation, DuplicateJob, SchemaError, UnknownJob
from .power import EfficiencyChain


@dataclass(frozen=True)
class ResourceVector:
    cores: int = 0
    gpus: int = 0
    memory_mb: int = 0

    def __post_init__(self):
        for name in ("cores", "gpus", "memory_mb"):
            if getattr(self, name) < 0:
                raise SchemaError(f"ResourceVector.{name} must be >= 0, got {getattr(self, name)}")

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(self.cores + other.cores, self.gpus + other.gpus,
                              self.memory_mb + other.memory_mb)

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(self.cores - other.cores, self.gpus - other.gpus,
                              self.memory_mb - other.memory_mb)

    def le(self, other: "ResourceVector") -> bool:
        """Componentwise <=."""
        return (self.cores <= other.cores and self.gpus <= other.gpus
                and self.memory_mb <= other.memory_mb)


def fits(node_free: ResourceVector, request: ResourceVector) -> bool:
    """True iff the request fits into the free resources, componentwise."""
    return request.le(node_free)


@dataclass(frozen=True)
class Node:
    node_id: str
    partition: str
    capacity: ResourceVector
    idle_power_w: float
    max_power_w: float
    gpu_idle_power_w: float = 0.0
    gpu_max_power_w: float = 0.0

    def __post_init__(self):
        if self.idle_power_w < 0:
            raise SchemaError(f"node {self.node_id}: idle_power_w must be >= 0")
        if self.max_power_w < self.idle_power_w:
            raise SchemaError(f"node {self.node_id}: max_power_w must be >= idle_power_w")
        if self.gpu_idle_power_w < 0:
            raise SchemaError(f"node {self.node_id}: gpu_idle_power_w must be >= 0")
        if self.gpu_max_power_w < self.gpu_idle_power_w:
            raise SchemaError(f"node {self.node_id}: gpu_max_power_w must be >= gpu_idle_power_w")
        if self.capacity.cores == 0 and self.capacity.gpus == 0 and self.capacity.memory_mb == 0:
            raise SchemaError(f"node {self.node_id}: capacity must be > 0 in at least one resource")

    @property
    def rated_power_w(self) -> float:
        """Peak draw: full dynamic range plus every GPU at max."""
        return self.max_power_w + self.capacity.gpus * self.gpu_max_power_w


@dataclass(frozen=True)
class Partition:
    name: str
    node_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.node_ids:
            raise SchemaError(f"partition {self.name}: node_ids must be non-empty")


@dataclass(frozen=True)
class ClusterConfig:
    partitions: tuple[Partition, ...]
    nodes: tuple[Node, ...]
    efficiency_chain: EfficiencyChain
    pue: float = 1.0

    def __post_init__(self):
        if self.pue < 1.0:
            raise SchemaError(f"pue must be >= 1, got {self.pue}")
        by_id = {}
        for node in self.nodes:
            if node.node_id in by_id:
                raise SchemaError(f"duplicate node_id {node.node_id}")
            by_id[node.node_id] = node
        seen = set()
        for part in self.partitions:
            for nid in part.node_ids:
                if nid not in by_id:
                    raise SchemaError(f"partition {part.name}: unknown node_id {nid}")
                if nid in seen:
                    raise SchemaError(f"node {nid} appears in two partitions")
                seen.add(nid)

    def node(self, node_id: str) -> Node:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise UnknownJob(f"unknown node_id {node_id}")

    @property
    def totals(self) -> ResourceVector:
        total = ResourceVector()
        for node in self.nodes:
            total = total + node.capacity
        return total

    @property
    def rated_power_w(self) -> float:
        return sum(node.rated_power_w for node in self.nodes)


@dataclass(frozen=True)
class Allocation:
    job_id: str
    placements: dict[str, ResourceVector]
    start_time_s: float

    def __post_init__(self):
        if not self.placements:
            raise SchemaError(f"allocation {self.job_id}: placements must be non-empty")


class ResourcePool:
    """Mutable per-node free map plus the live allocation table.

    Single-threaded mutation; snapshots handed out by free_map() are copies.
    """

    def __init__(self, cluster: ClusterConfig):
        self.cluster = cluster
        self.free: dict[str, ResourceVector] = {n.node_id: n.capacity for n in cluster.nodes}
        self.allocations: dict[str, Allocation] = {}

    def free_map(self) -> dict[str, ResourceVector]:
        return dict(self.free)

    def allocate(self, job_id: str, placements: dict[str, ResourceVector],
                 start_time_s: float) -> Allocation:
        if job_id in self.allocations:
            raise DuplicateJob(f"job {job_id} already allocated")
        for node_id, share in placements.items():
            if node_id not in self.free:
                raise CapacityViolation(f"job {job_id}: unknown node {node_id}")
            if not fits(self.free[node_id], share):
                raise CapacityViolation(
                    f"job {job_id}: placement {share} exceeds free {self.free[node_id]} on {node_id}")
        for node_id, share in placements.items():
            self.free[node_id] = self.free[node_id] - share
        alloc = Allocation(job_id=job_id, placements=dict(placements), start_time_s=start_time_s)
        self.allocations[job_id] = alloc
        return alloc

    def release(self, job_id: str) -> Allocation:
        alloc = self.allocations.pop(job_id, None)
        if alloc is None:
            raise UnknownJob(f"job {job_id} is not allocated")
        for node_id, share in alloc.placements.items():
            self.free[node_id] = self.free[node_id] + share
        return alloc

    def tenants(self, node_id: str) -> list[Allocation]:
        return [a for a in self.allocations.values() if node_id in a.placements]

    def busy_node_count(self) -> int:
        busy = set()
        for alloc in self.allocations.values():
            busy.update(alloc.placements)
        return len(busy)

    def check_invariants(self) -> None:
        """Sum of live placements never exceeds capacity, componentwise."""
        used: dict[str, ResourceVector] = {n.node_id: ResourceVector() for n in self.cluster.nodes}
        for alloc in self.allocations.values():
            for node_id, share in alloc.placements.items():
                used[node_id] = used[node_id] + share
        for node in self.cluster.nodes:
            if not used[node.node_id].le(node.capacity):
                raise CapacityViolation(
                    f"node {node.node_id}: live placements {used[node.node_id]} exceed capacity")
            if self.free[node.node_id] != node.capacity - used[node.node_id]:
                raise CapacityViolation(f"node {node.node_id}: free map out of sync")


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise SchemaError(f"{context}: missing field '{key}'")
    return mapping[key]


def resource_vector_from_dict(data: dict, context: str = "capacity") -> ResourceVector:
    return ResourceVector(
        cores=int(data.get("cores", 0)),
        gpus=int(data.get("gpus", 0)),
        memory_mb=int(data.get("memory_mb", 0)),
    )


def cluster_from_dict(data: dict) -> ClusterConfig:
    nodes = []
    for raw in _require(data, "nodes", "cluster"):
        capacity = resource_vector_from_dict(_require(raw, "capacity", "node"))
        nodes.append(Node(
            node_id=str(_require(raw, "node_id", "node")),
            partition=str(_require(raw, "partition", "node")),
            capacity=capacity,
            idle_power_w=float(_require(raw, "idle_power_w", "node")),
            max_power_w=float(_require(raw, "max_power_w", "node")),
            gpu_idle_power_w=float(raw.get("gpu_idle_power_w", 0.0)),
            gpu_max_power_w=float(raw.get("gpu_max_power_w", 0.0)),
        ))
    partitions = []
    for raw in _require(data, "partitions", "cluster"):
        partitions.append(Partition(
            name=str(_require(raw, "name", "partition")),
            node_ids=tuple(str(n) for n in _require(raw, "node_ids", "partition")),
        ))
    chain = EfficiencyChain.from_dict(data.get("efficiency_chain", {"stages": []}))
    return ClusterConfig(
        partitions=tuple(partitions),
        nodes=tuple(nodes),
        efficiency_chain=chain,
        pue=float(data.get("pue", 1.0)),
    )


def load_cluster(path: str | Path) -> ClusterConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"cluster config {path}: invalid JSON ({exc})") from exc
    return cluster_from_dict(data)
