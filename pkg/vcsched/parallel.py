"""Parallel jobs: task-level views and the equal-share rule for a job's tasks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

from vcsched.model import Allocation, ProblemInstance, TaskKey


@dataclass(frozen=True)
class TaskItem:
    """One task as seen by the placement solvers."""

    job: int
    task: int
    cpu_need: float
    mem_need: float

    @property
    def key(self) -> TaskKey:
        return (self.job, self.task)


def expand_tasks(inst: ProblemInstance) -> List[TaskItem]:
    """One item per task, job-major, inheriting the job's needs."""
    return [
        TaskItem(i, k, job.cpu_need, job.mem_need)
        for i, job in enumerate(inst.jobs)
        for k in range(job.task_count)
    ]


def enforce_uniformity(inst: ProblemInstance, alloc: Allocation) -> Allocation:
    """Lower every task of a multi-task job to the job's smallest task share.

    Lowering is the only direction that cannot break a capacity constraint.
    """
    shares: Dict[TaskKey, float] = dict(alloc.cpu_share)
    for i, job in enumerate(inst.jobs):
        if job.task_count < 2:
            continue
        keys = [(i, k) for k in range(job.task_count) if (i, k) in alloc.placement]
        if not keys:
            continue
        floor = min(alloc.share_of(key) for key in keys)
        for key in keys:
            shares[key] = floor
    return alloc.with_shares(shares)
