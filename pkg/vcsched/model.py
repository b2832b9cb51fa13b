"""Instances, allocations, yields, and the feasibility checker shared by every solver.

Hosts are identical and normalised: each offers 1.0 CPU and 1.0 memory.
A job ``i`` needs ``cpu_need`` (alpha_i) of one host's CPU to run at full
speed and ``mem_need`` (m_i) of one host's memory, for each of its
``task_count`` tasks. An allocation places every task on exactly one host
and grants it a CPU share on that host.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from vcsched.errors import InstanceError, StructuralError

logger = logging.getLogger(__name__)

# Absolute tolerance for every capacity and cap comparison.
TOL = 1e-9

TaskKey = Tuple[int, int]

# Every random draw in the engine comes from numpy Generators on this bit generator.
RNG_ALGORITHM = "numpy.PCG64"


def _as_fraction(value: Any, name: str) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise InstanceError(f"{name} must be a number, got {value!r}")
    if not 0.0 <= number <= 1.0:
        raise InstanceError(f"{name} must lie in [0, 1], got {number}")
    return number


def _as_count(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise InstanceError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise InstanceError(f"{name} must be >= 1, got {value}")
    return int(value)


@dataclass(frozen=True)
class JobSpec:
    """Resource needs of one job; every task of the job has the same needs."""

    cpu_need: float
    mem_need: float
    task_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "cpu_need", _as_fraction(self.cpu_need, "cpu_need"))
        object.__setattr__(self, "mem_need", _as_fraction(self.mem_need, "mem_need"))
        object.__setattr__(
            self, "task_count", _as_count(self.task_count, "task_count")
        )

    @property
    def total_cpu_need(self) -> float:
        return self.task_count * self.cpu_need

    @property
    def total_mem_need(self) -> float:
        return self.task_count * self.mem_need


@dataclass(frozen=True)
class ProblemInstance:
    """H identical hosts and an ordered list of jobs."""

    host_count: int
    jobs: Tuple[JobSpec, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "host_count", _as_count(self.host_count, "host_count")
        )
        jobs = tuple(self.jobs)
        if not jobs:
            raise InstanceError("an instance needs at least one job")
        for job in jobs:
            if not isinstance(job, JobSpec):
                raise InstanceError(f"expected JobSpec, got {type(job).__name__}")
        object.__setattr__(self, "jobs", jobs)

    @property
    def job_count(self) -> int:
        return len(self.jobs)

    @property
    def task_count(self) -> int:
        return sum(job.task_count for job in self.jobs)

    @property
    def total_cpu_need(self) -> float:
        return sum(job.total_cpu_need for job in self.jobs)

    @property
    def total_mem_need(self) -> float:
        return sum(job.total_mem_need for job in self.jobs)

    def tasks(self) -> List[TaskKey]:
        """All (job, task) keys, job-major."""
        return [
            (i, k) for i, job in enumerate(self.jobs) for k in range(job.task_count)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hosts": self.host_count,
            "jobs": [
                {"cpu": job.cpu_need, "mem": job.mem_need, "tasks": job.task_count}
                for job in self.jobs
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProblemInstance":
        try:
            hosts = data["hosts"]
            raw_jobs = data["jobs"]
        except (KeyError, TypeError) as e:
            raise InstanceError(f"instance is missing field {e}")
        jobs = []
        for n, raw in enumerate(raw_jobs):
            try:
                jobs.append(JobSpec(raw["cpu"], raw["mem"], raw.get("tasks", 1)))
            except (KeyError, TypeError) as e:
                raise InstanceError(f"job {n} is missing field {e}")
        return cls(hosts, tuple(jobs))


def _freeze_placement(placement: Mapping[Any, Any]) -> Mapping[TaskKey, int]:
    return MappingProxyType(
        {(int(i), int(k)): int(h) for (i, k), h in placement.items()}
    )


def _freeze_shares(shares: Mapping[Any, Any]) -> Mapping[TaskKey, float]:
    return MappingProxyType(
        {(int(i), int(k)): float(s) for (i, k), s in shares.items()}
    )


@dataclass(frozen=True, eq=False)
class Allocation:
    """Host of every task plus the CPU share it receives there."""

    placement: Mapping[TaskKey, int]
    cpu_share: Mapping[TaskKey, float]

    def __post_init__(self):
        object.__setattr__(self, "placement", _freeze_placement(self.placement))
        object.__setattr__(self, "cpu_share", _freeze_shares(self.cpu_share))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Allocation):
            return NotImplemented
        return dict(self.placement) == dict(other.placement) and dict(
            self.cpu_share
        ) == dict(other.cpu_share)

    def host_of(self, key: TaskKey) -> int:
        return self.placement[key]

    def share_of(self, key: TaskKey) -> float:
        return self.cpu_share.get(key, 0.0)

    def tasks_on(self, host: int) -> List[TaskKey]:
        return sorted(key for key, h in self.placement.items() if h == host)

    def with_shares(self, shares: Mapping[TaskKey, float]) -> "Allocation":
        return Allocation(dict(self.placement), dict(shares))

    def to_records(self) -> List[Dict[str, Any]]:
        return [
            {"job": i, "task": k, "host": h, "share": self.share_of((i, k))}
            for (i, k), h in sorted(self.placement.items())
        ]

    @classmethod
    def from_records(cls, records: Sequence[Mapping[str, Any]]) -> "Allocation":
        placement: Dict[TaskKey, int] = {}
        shares: Dict[TaskKey, float] = {}
        for n, rec in enumerate(records):
            try:
                key = (int(rec["job"]), int(rec.get("task", 0)))
                placement[key] = int(rec["host"])
                shares[key] = float(rec.get("share", 0.0))
            except (KeyError, TypeError, ValueError) as e:
                raise InstanceError(f"allocation record {n} is malformed: {e}")
        return cls(placement, shares)


class ViolationKind(str, Enum):
    PLACEMENT = "placement"
    CPU_CAPACITY = "cpu_capacity"
    MEMORY_CAPACITY = "memory_capacity"
    CPU_CAP = "cpu_cap"
    NEGATIVE_SHARE = "negative_share"
    UNIFORMITY = "uniformity"
    YIELD_FLOOR = "yield_floor"


@dataclass(frozen=True)
class Violation:
    """One violated constraint: what, where, by how much."""

    kind: ViolationKind
    subject: Tuple[int, ...]
    amount: float
    limit: float

    def __str__(self) -> str:
        where = "/".join(str(s) for s in self.subject)
        return f"{self.kind.value} at {where}: {self.amount:.12g} vs limit {self.limit:.12g}"


@dataclass(frozen=True)
class YieldReport:
    per_task_yield: Tuple[float, ...]
    per_job_yield: Tuple[float, ...]
    min_yield: float
    avg_task_yield: float
    avg_job_yield: float


def validate_structure(inst: ProblemInstance, alloc: Allocation) -> None:
    """Raise StructuralError if the allocation names nonexistent jobs, tasks or hosts."""
    for (i, k), h in alloc.placement.items():
        if not 0 <= i < inst.job_count:
            raise StructuralError(f"job index {i} out of range")
        if not 0 <= k < inst.jobs[i].task_count:
            raise StructuralError(f"task index {k} out of range for job {i}")
        if not 0 <= h < inst.host_count:
            raise StructuralError(f"host index {h} out of range for task {(i, k)}")
    for key in alloc.cpu_share:
        if key not in alloc.placement:
            raise StructuralError(f"share given for unplaced task {key}")


def host_loads(inst: ProblemInstance, alloc: Allocation) -> Tuple[np.ndarray, np.ndarray]:
    """Per-host (granted CPU, used memory) totals."""
    cpu = np.zeros(inst.host_count)
    mem = np.zeros(inst.host_count)
    for (i, k), h in alloc.placement.items():
        cpu[h] += alloc.share_of((i, k))
        mem[h] += inst.jobs[i].mem_need
    return cpu, mem


def check_feasible(
    inst: ProblemInstance,
    alloc: Allocation,
    tol: float = TOL,
    uniform: bool = True,
) -> List[Violation]:
    """List every violated constraint; an empty list means feasible.

    With ``uniform=False`` tasks of one job may hold different shares.
    """
    validate_structure(inst, alloc)
    violations: List[Violation] = []

    for key in inst.tasks():
        if key not in alloc.placement:
            violations.append(Violation(ViolationKind.PLACEMENT, key, 0.0, 1.0))

    cpu, mem = host_loads(inst, alloc)
    for h in range(inst.host_count):
        if cpu[h] > 1.0 + tol:
            violations.append(
                Violation(ViolationKind.CPU_CAPACITY, (h,), float(cpu[h]), 1.0)
            )
        if mem[h] > 1.0 + tol:
            violations.append(
                Violation(ViolationKind.MEMORY_CAPACITY, (h,), float(mem[h]), 1.0)
            )

    for key in sorted(alloc.placement):
        share = alloc.share_of(key)
        need = inst.jobs[key[0]].cpu_need
        if share > need + tol:
            violations.append(Violation(ViolationKind.CPU_CAP, key, share, need))
        if share < -tol:
            violations.append(Violation(ViolationKind.NEGATIVE_SHARE, key, share, 0.0))

    for i, job in enumerate(inst.jobs):
        if not uniform or job.task_count < 2:
            continue
        shares = [
            alloc.share_of((i, k))
            for k in range(job.task_count)
            if (i, k) in alloc.placement
        ]
        if shares and max(shares) - min(shares) > tol:
            violations.append(
                Violation(
                    ViolationKind.UNIFORMITY, (i,), max(shares) - min(shares), tol
                )
            )

    return violations


def task_yield(job: JobSpec, share: float) -> float:
    # Zero-demand jobs are fully served by definition.
    if job.cpu_need == 0.0:
        return 1.0
    return share / job.cpu_need


def evaluate(inst: ProblemInstance, alloc: Allocation) -> YieldReport:
    """Per-task and per-job yields with their minimum and averages."""
    validate_structure(inst, alloc)
    per_task = [task_yield(inst.jobs[i], alloc.share_of((i, k))) for i, k in inst.tasks()]

    per_job = []
    for i, job in enumerate(inst.jobs):
        if job.cpu_need == 0.0:
            per_job.append(1.0)
            continue
        granted = sum(alloc.share_of((i, k)) for k in range(job.task_count))
        per_job.append(granted / job.total_cpu_need)

    return YieldReport(
        per_task_yield=tuple(per_task),
        per_job_yield=tuple(per_job),
        min_yield=min(per_task),
        avg_task_yield=float(np.mean(per_task)),
        avg_job_yield=float(np.mean(per_job)),
    )


def placement_yield(inst: ProblemInstance, placement: Mapping[TaskKey, int]) -> float:
    """Best minimum yield a fixed placement supports: min over hosts of min(1, 1/load)."""
    loads = np.zeros(inst.host_count)
    for (i, _), h in placement.items():
        loads[h] += inst.jobs[i].cpu_need
    peak = float(loads.max())
    return 1.0 if peak <= 1.0 else 1.0 / peak


def allocation_at_yield(
    inst: ProblemInstance, placement: Mapping[TaskKey, int], y: float
) -> Allocation:
    """Grant every task exactly ``y`` times its CPU need."""
    shares = {key: inst.jobs[key[0]].cpu_need * y for key in placement}
    return Allocation(dict(placement), shares)


@dataclass(frozen=True)
class SolverOutcome:
    """Result of one solver call: success flag, metrics and the allocation."""

    algorithm: str
    success: bool
    wall_time: float = 0.0
    allocation: Optional[Allocation] = None
    min_yield: Optional[float] = None
    avg_task_yield: Optional[float] = None
    avg_job_yield: Optional[float] = None
    message: str = ""

    @classmethod
    def failed(
        cls, algorithm: str, message: str, wall_time: float = 0.0
    ) -> "SolverOutcome":
        return cls(algorithm, False, wall_time, message=message)

    @classmethod
    def solved(
        cls,
        algorithm: str,
        inst: ProblemInstance,
        allocation: Allocation,
        wall_time: float,
        message: str = "",
    ) -> "SolverOutcome":
        report = evaluate(inst, allocation)
        return cls(
            algorithm,
            True,
            wall_time,
            allocation,
            report.min_yield,
            report.avg_task_yield,
            report.avg_job_yield,
            message,
        )

    def with_allocation(
        self, inst: ProblemInstance, allocation: Allocation
    ) -> "SolverOutcome":
        """Same outcome with a replaced allocation; wall time is kept."""
        return SolverOutcome.solved(
            self.algorithm, inst, allocation, self.wall_time, self.message
        )


PathLike = Union[str, Path]


def write_json(data: Any, path: PathLike) -> Path:
    output_path = Path(path)
    try:
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)
    except Exception as e:
        logger.error(f"Failed to write {output_path}: {e}")
        raise
    logger.debug(f"Wrote {output_path}")
    return output_path


def read_json(path: PathLike) -> Any:
    input_path = Path(path)
    if not input_path.is_file():
        raise FileNotFoundError(f"File not found: {input_path}")
    with open(input_path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise InstanceError(f"{input_path} is not valid JSON: {e}")


def save_instance(inst: ProblemInstance, path: PathLike) -> Path:
    return write_json(inst.to_dict(), path)


def load_instance(path: PathLike) -> ProblemInstance:
    return ProblemInstance.from_dict(read_json(path))


def save_allocation(alloc: Allocation, path: PathLike) -> Path:
    return write_json(alloc.to_records(), path)


def load_allocation(path: PathLike) -> Allocation:
    return Allocation.from_records(read_json(path))
