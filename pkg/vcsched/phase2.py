"""Second phase: raise average yield with placements frozen and the minimum yield floored.

Both variants start every task at exactly ``cpu_need * floor_y`` and hand out
the remaining CPU of each host. The per-task variant is optimal for the
average per-task yield; the per-job variant keeps the tasks of a job equal and
stops when no job can be raised any further.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from enum import Enum
from typing import Dict, List, Optional

from vcsched.errors import InfeasibleAllocationError
from vcsched.model import (
    TOL,
    Allocation,
    ProblemInstance,
    SolverOutcome,
    TaskKey,
    ViolationKind,
    check_feasible,
    evaluate,
)
from vcsched.parallel import enforce_uniformity

logger = logging.getLogger(__name__)


class Phase2Mode(str, Enum):
    PER_TASK = "per-task"
    PER_JOB = "per-job"
    OFF = "off"


def default_mode(inst: ProblemInstance) -> Phase2Mode:
    """Per-job for instances with parallel jobs, per-task otherwise."""
    if any(job.task_count > 1 for job in inst.jobs):
        return Phase2Mode.PER_JOB
    return Phase2Mode.PER_TASK


def _require_floor(
    inst: ProblemInstance,
    alloc: Allocation,
    floor_y: float,
    uniform: bool,
    tol: float,
) -> None:
    violations = [
        v
        for v in check_feasible(inst, alloc, tol)
        if uniform or v.kind is not ViolationKind.UNIFORMITY
    ]
    if violations:
        raise InfeasibleAllocationError(
            f"allocation violates {len(violations)} constraint(s), first: {violations[0]}"
        )
    lowest = evaluate(inst, alloc).min_yield
    if lowest < floor_y - tol:
        raise InfeasibleAllocationError(
            f"minimum yield {lowest:.12g} is below the floor {floor_y:.12g}"
        )


def _clamp_floor(floor_y: float) -> float:
    return min(max(float(floor_y), 0.0), 1.0)


def maximize_avg_yield_per_task(
    inst: ProblemInstance, alloc: Allocation, floor_y: float, tol: float = TOL
) -> Allocation:
    """Fill each host's spare CPU, smallest CPU need first.

    Args:
        inst: Instance the allocation belongs to
        alloc: Feasible allocation to improve; placement is kept
        floor_y: Minimum yield the allocation already reaches
        tol: Numeric tolerance for capacity checks

    Returns:
        Allocation with the same placement and every host full or fully served

    Raises:
        InfeasibleAllocationError: If ``alloc`` violates a constraint or the floor
    """
    _require_floor(inst, alloc, floor_y, uniform=False, tol=tol)
    floor_y = _clamp_floor(floor_y)

    by_host: Dict[int, List[TaskKey]] = defaultdict(list)
    for key, h in alloc.placement.items():
        by_host[h].append(key)

    shares: Dict[TaskKey, float] = {}
    for h, keys in by_host.items():
        for key in keys:
            shares[key] = inst.jobs[key[0]].cpu_need * floor_y
        remaining = 1.0 - sum(shares[key] for key in keys)

        for key in sorted(keys, key=lambda k: (inst.jobs[k[0]].cpu_need, k)):
            need = inst.jobs[key[0]].cpu_need
            current = shares[key]
            raised = min(need, current + max(remaining, 0.0))
            remaining -= raised - current
            shares[key] = raised

    return alloc.with_shares(shares)


def maximize_avg_yield_per_job(
    inst: ProblemInstance, alloc: Allocation, floor_y: float, tol: float = TOL
) -> Allocation:
    """Water-fill whole jobs, smallest total CPU need first.

    Raising a job raises all of its tasks by the same amount, so a job stops
    as soon as it is saturated or any host holding one of its tasks is full.

    Args:
        inst: Instance the allocation belongs to
        alloc: Feasible allocation to improve; placement is kept
        floor_y: Minimum yield the allocation already reaches
        tol: Numeric tolerance for capacity checks

    Returns:
        Allocation with equal shares inside every job
    """
    alloc = enforce_uniformity(inst, alloc)
    _require_floor(inst, alloc, floor_y, uniform=True, tol=tol)
    floor_y = _clamp_floor(floor_y)

    hosts_of: Dict[int, Counter] = defaultdict(Counter)
    for (i, _), h in alloc.placement.items():
        hosts_of[i][h] += 1

    share = {i: job.cpu_need * floor_y for i, job in enumerate(inst.jobs)}
    remaining = [1.0] * inst.host_count
    for i, counts in hosts_of.items():
        for h, count in counts.items():
            remaining[h] -= share[i] * count

    order = sorted(range(inst.job_count), key=lambda i: (inst.jobs[i].total_cpu_need, i))
    raised_jobs = 0
    for i in order:
        need = inst.jobs[i].cpu_need
        counts = hosts_of.get(i)
        if not counts or share[i] >= need - tol:
            continue
        if any(remaining[h] <= tol for h in counts):
            continue
        delta = min(
            need - share[i], min(remaining[h] / count for h, count in counts.items())
        )
        share[i] += delta
        for h, count in counts.items():
            remaining[h] -= delta * count
        raised_jobs += 1

    logger.debug(f"Per-job phase 2 raised {raised_jobs} of {inst.job_count} jobs")
    shares = {key: share[key[0]] for key in alloc.placement}
    return alloc.with_shares(shares)


def finalize(
    inst: ProblemInstance,
    outcome: SolverOutcome,
    mode: Optional[Phase2Mode] = None,
) -> SolverOutcome:
    """Run phase 2 on a successful outcome; its wall time is left untouched."""
    if not outcome.success or outcome.allocation is None:
        return outcome
    mode = default_mode(inst) if mode is None else Phase2Mode(mode)
    if mode is Phase2Mode.OFF:
        return outcome

    floor_y = outcome.min_yield if outcome.min_yield is not None else 0.0
    if mode is Phase2Mode.PER_JOB:
        alloc = maximize_avg_yield_per_job(inst, outcome.allocation, floor_y)
    else:
        alloc = maximize_avg_yield_per_task(inst, outcome.allocation, floor_y)
    return outcome.with_allocation(inst, alloc)
