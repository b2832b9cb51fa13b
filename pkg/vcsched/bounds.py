"""Upper bounds and the exact oracle.

``relaxed_optimum`` is the closed-form optimum when tasks may be split
across hosts; ``relaxed_solution`` builds such a fractional solution;
``exact_solve`` enumerates integral placements for small instances.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from vcsched.errors import RelaxedInfeasibleError, TooLargeForExactError
from vcsched.model import (
    TOL,
    ProblemInstance,
    SolverOutcome,
    Violation,
    ViolationKind,
    allocation_at_yield,
)
from vcsched.parallel import expand_tasks
from vcsched.phase2 import Phase2Mode, finalize

logger = logging.getLogger(__name__)

JobHost = Tuple[int, int]

DEFAULT_NODE_BUDGET = 10**8

# Leftover job fraction below which sparse first-fit counts a job as covered.
_COVERED = 1e-9


def saturation_bound(inst: ProblemInstance) -> float:
    """min(1, H / total CPU need), ignoring memory."""
    total = inst.total_cpu_need
    if total <= 0.0:
        return 1.0
    return min(inst.host_count / total, 1.0)


def relaxed_optimum(inst: ProblemInstance) -> float:
    """Best minimum yield when tasks may be split fractionally across hosts."""
    if inst.total_mem_need > inst.host_count + TOL:
        raise RelaxedInfeasibleError(
            f"total memory need {inst.total_mem_need:.6g} exceeds {inst.host_count} hosts"
        )
    return saturation_bound(inst)


class SeedMode(str, Enum):
    UNIFORM = "uniform"
    SPARSE = "sparse"


@dataclass(frozen=True)
class RelaxedSolution:
    """Fractional placement e[i, j] (summing to 1 per job) and the CPU it carries."""

    y_opt: float
    fractional_e: Mapping[JobHost, float]
    fractional_alpha: Mapping[JobHost, float]
    mode: str

    @property
    def nonzero_count(self) -> int:
        return sum(1 for value in self.fractional_e.values() if value > 0.0)

    def host_weights(self, job: int, host_count: int) -> np.ndarray:
        weights = np.zeros(host_count)
        for h in range(host_count):
            weights[h] = self.fractional_e.get((job, h), 0.0)
        return weights


def _solution_from_e(
    inst: ProblemInstance, y: float, e: Dict[JobHost, float], mode: str
) -> RelaxedSolution:
    alpha = {
        (i, h): frac * inst.jobs[i].total_cpu_need * y for (i, h), frac in e.items()
    }
    return RelaxedSolution(y, e, alpha, mode)


def _uniform_e(inst: ProblemInstance) -> Dict[JobHost, float]:
    share = 1.0 / inst.host_count
    return {
        (i, h): share for i in range(inst.job_count) for h in range(inst.host_count)
    }


def _first_fit_e(inst: ProblemInstance, y: float) -> Optional[Dict[JobHost, float]]:
    """Jobs in order, hosts in order, splitting a job where a host fills up.

    Returns None when the hosts run out before every job is covered.
    """
    H = inst.host_count
    cpu_left = [1.0] * H
    mem_left = [1.0] * H
    e: Dict[JobHost, float] = {}
    h = 0

    for i, job in enumerate(inst.jobs):
        cpu = job.total_cpu_need * y
        mem = job.total_mem_need
        left = 1.0
        while left > _COVERED:
            if h >= H:
                return None
            frac = left
            if cpu > 0.0:
                frac = min(frac, cpu_left[h] / cpu)
            if mem > 0.0:
                frac = min(frac, mem_left[h] / mem)
            if frac <= _COVERED:
                h += 1
                continue
            e[(i, h)] = e.get((i, h), 0.0) + frac
            cpu_left[h] -= frac * cpu
            mem_left[h] -= frac * mem
            left -= frac
            if left > _COVERED:
                h += 1

        total = sum(v for (j, _), v in e.items() if j == i)
        for key in [key for key in e if key[0] == i]:
            e[key] /= total

    return e


def relaxed_solution(
    inst: ProblemInstance, mode: SeedMode = SeedMode.SPARSE
) -> RelaxedSolution:
    """A fractional solution reaching the relaxed optimum.

    Uniform mode spreads every job evenly over all hosts. Sparse mode runs a
    fractional first-fit, giving at most J + H - 1 nonzero entries; with two
    resources first-fit can strand capacity, in which case the uniform
    solution is returned instead with mode ``uniform-fallback``.
    """
    y = relaxed_optimum(inst)
    mode = SeedMode(mode)
    if mode is SeedMode.UNIFORM:
        return _solution_from_e(inst, y, _uniform_e(inst), SeedMode.UNIFORM.value)

    e = _first_fit_e(inst, y)
    if e is None:
        logger.warning(
            "Sparse first-fit stranded capacity; using the uniform relaxed solution"
        )
        return _solution_from_e(inst, y, _uniform_e(inst), "uniform-fallback")
    return _solution_from_e(inst, y, e, SeedMode.SPARSE.value)


def check_relaxed(
    inst: ProblemInstance, sol: RelaxedSolution, tol: float = TOL
) -> List[Violation]:
    """Fractional feasibility of a relaxed solution and its yield."""
    violations: List[Violation] = []
    cpu = np.zeros(inst.host_count)
    mem = np.zeros(inst.host_count)
    placed = np.zeros(inst.job_count)
    granted = np.zeros(inst.job_count)

    for (i, h), frac in sol.fractional_e.items():
        if frac < -tol:
            violations.append(Violation(ViolationKind.NEGATIVE_SHARE, (i, h), frac, 0.0))
        placed[i] += frac
        mem[h] += frac * inst.jobs[i].total_mem_need
    for (i, h), amount in sol.fractional_alpha.items():
        cpu[h] += amount
        granted[i] += amount

    for i, job in enumerate(inst.jobs):
        if abs(placed[i] - 1.0) > tol:
            violations.append(Violation(ViolationKind.PLACEMENT, (i,), float(placed[i]), 1.0))
        if job.cpu_need > 0.0:
            got = float(granted[i] / job.total_cpu_need)
            if got < sol.y_opt - tol:
                violations.append(Violation(ViolationKind.YIELD_FLOOR, (i,), got, sol.y_opt))
    for h in range(inst.host_count):
        if cpu[h] > 1.0 + tol:
            violations.append(Violation(ViolationKind.CPU_CAPACITY, (h,), float(cpu[h]), 1.0))
        if mem[h] > 1.0 + tol:
            violations.append(
                Violation(ViolationKind.MEMORY_CAPACITY, (h,), float(mem[h]), 1.0)
            )
    return violations


@dataclass(frozen=True)
class ExactLimits:
    """Enumeration budget, counted in (task, host) admission tests."""

    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        if self.node_budget < 1:
            raise ValueError("node_budget must be >= 1")


# Migration cost of putting task number k (job-major order) on host h.
MoveCost = Callable[[int, int], float]


@dataclass
class SearchResult:
    placement: Optional[Dict[Tuple[int, int], int]]
    value: float
    nodes: int


def exhaustive_search(
    inst: ProblemInstance,
    limits: ExactLimits,
    move_cost: Optional[MoveCost] = None,
    cost_budget: float = math.inf,
) -> SearchResult:
    """Depth-first enumeration of memory-feasible placements maximising min yield.

    Ties go to the first placement enumerated (tasks job-major, hosts in index
    order). Prunings never discard a strictly better placement: memory
    overflow, the incumbent bound (loads only grow), host symmetry when no
    move cost distinguishes hosts, and an early stop once the incumbent
    reaches the saturation bound.
    """
    tasks = expand_tasks(inst)
    n = len(tasks)
    H = inst.host_count
    if n * math.log(H) > math.log(limits.node_budget) + 1e-12:
        raise TooLargeForExactError(
            f"{H}^{n} placements exceed the enumeration budget of {limits.node_budget}"
        )

    symmetric = move_cost is None
    ceiling = saturation_bound(inst) - 1e-12
    cpu = [0.0] * H
    mem = [0.0] * H
    choice = [0] * n
    state = {"best": -1.0, "best_choice": None, "nodes": 0, "stop": False}

    def descend(k: int, opened: int, peak: float, cost: float) -> None:
        if k == n:
            value = 1.0 if peak <= 1.0 else 1.0 / peak
            if value > state["best"]:
                state["best"] = value
                state["best_choice"] = list(choice)
                if value >= ceiling:
                    state["stop"] = True
            return

        task = tasks[k]
        width = min(H, opened + 1) if symmetric else H
        for h in range(width):
            state["nodes"] += 1
            if state["nodes"] > limits.node_budget:
                raise TooLargeForExactError(
                    f"search exceeded {limits.node_budget} nodes"
                )
            if mem[h] + task.mem_need > 1.0 + TOL:
                continue
            extra = 0.0
            if move_cost is not None:
                extra = move_cost(k, h)
                if cost + extra > cost_budget + TOL:
                    continue
            load = cpu[h] + task.cpu_need
            new_peak = peak if peak >= load else load
            bound = 1.0 if new_peak <= 1.0 else 1.0 / new_peak
            if bound <= state["best"]:
                continue

            old_cpu, old_mem = cpu[h], mem[h]
            cpu[h], mem[h] = load, old_mem + task.mem_need
            choice[k] = h
            descend(k + 1, max(opened, h + 1), new_peak, cost + extra)
            cpu[h], mem[h] = old_cpu, old_mem
            if state["stop"]:
                return

    descend(0, 0, 0.0, 0.0)

    if state["best_choice"] is None:
        return SearchResult(None, 0.0, state["nodes"])
    placement = {tasks[k].key: h for k, h in enumerate(state["best_choice"])}
    return SearchResult(placement, state["best"], state["nodes"])


def exact_solve(
    inst: ProblemInstance,
    limits: Optional[ExactLimits] = None,
    phase2: Optional[Phase2Mode] = None,
) -> SolverOutcome:
    """Optimal minimum yield by exhaustive enumeration (small instances only).

    Args:
        inst: Instance to solve
        limits: Node budget of the search (default: 10**8 nodes)
        phase2: Average-yield phase applied after the search

    Returns:
        Outcome with the first optimal placement found, or a failure when no
        memory-feasible placement exists

    Raises:
        TooLargeForExactError: If the instance cannot fit the node budget
    """
    limits = limits or ExactLimits()
    start = time.perf_counter()
    result = exhaustive_search(inst, limits)
    elapsed = time.perf_counter() - start
    logger.debug(f"Exact search visited {result.nodes} nodes in {elapsed:.3f}s")

    if result.placement is None:
        return SolverOutcome.failed(
            "exact", "no memory-feasible placement exists", elapsed
        )
    alloc = allocation_at_yield(inst, result.placement, result.value)
    outcome = SolverOutcome.solved(
        "exact", inst, alloc, elapsed, f"{result.nodes} nodes"
    )
    return finalize(inst, outcome, phase2)
