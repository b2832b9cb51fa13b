"""Re-optimising a running placement under a migration budget.

Every task either already runs on a host (its previous host) or is new.
Moving a running task costs its memory need (the state that must be copied),
or 1 per move in count mode; new tasks are free to land anywhere.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Any, Dict, Mapping, Optional

from vcsched.bounds import ExactLimits, exhaustive_search
from vcsched.errors import InstanceError
from vcsched.model import (
    Allocation,
    PathLike,
    ProblemInstance,
    SolverOutcome,
    TaskKey,
    allocation_at_yield,
    read_json,
    validate_structure,
    write_json,
)
from vcsched.phase2 import Phase2Mode, finalize

logger = logging.getLogger(__name__)


class BudgetMode(str, Enum):
    FRACTION = "fraction"
    COUNT = "count"


@dataclass(frozen=True)
class AdaptationInstance:
    """A problem instance, where its tasks run now, and the migration budget.

    ``previous`` maps a task to its current host; tasks mapped to None or
    absent from the mapping are new.
    """

    inst: ProblemInstance
    previous: Mapping[TaskKey, Optional[int]]
    budget: float
    budget_mode: BudgetMode = BudgetMode.FRACTION

    def __post_init__(self):
        if not self.budget >= 0.0:
            raise InstanceError(f"budget must be >= 0, got {self.budget}")
        object.__setattr__(self, "budget_mode", BudgetMode(self.budget_mode))
        previous = {}
        for (i, k), h in self.previous.items():
            if not 0 <= i < self.inst.job_count or not 0 <= k < self.inst.jobs[i].task_count:
                raise InstanceError(f"previous placement names unknown task {(i, k)}")
            if h is not None and not 0 <= h < self.inst.host_count:
                raise InstanceError(f"previous host {h} of task {(i, k)} out of range")
            previous[(int(i), int(k))] = None if h is None else int(h)
        object.__setattr__(self, "previous", MappingProxyType(previous))

    def previous_host(self, key: TaskKey) -> Optional[int]:
        return self.previous.get(key)

    def move_charge(self, key: TaskKey, host: int) -> float:
        """Budget consumed by running task ``key`` on ``host``."""
        before = self.previous.get(key)
        if before is None or before == host:
            return 0.0
        if self.budget_mode is BudgetMode.COUNT:
            return 1.0
        return self.inst.jobs[key[0]].mem_need

    def to_dict(self) -> Dict[str, Any]:
        data = self.inst.to_dict()
        data["previous"] = [
            {"job": i, "task": k, "host": self.previous.get((i, k))}
            for i, k in self.inst.tasks()
        ]
        data["budget"] = self.budget
        data["budget_mode"] = self.budget_mode.value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AdaptationInstance":
        inst = ProblemInstance.from_dict(data)
        if "previous" not in data or "budget" not in data:
            raise InstanceError("adaptation input needs 'previous' and 'budget'")
        previous: Dict[TaskKey, Optional[int]] = {}
        for n, rec in enumerate(data["previous"]):
            try:
                host = rec["host"]
                previous[(int(rec["job"]), int(rec.get("task", 0)))] = (
                    None if host is None else int(host)
                )
            except (KeyError, TypeError, ValueError) as e:
                raise InstanceError(f"previous record {n} is malformed: {e}")
        try:
            budget = float(data["budget"])
        except (TypeError, ValueError):
            raise InstanceError(f"budget must be a number, got {data['budget']!r}")
        mode = data.get("budget_mode", BudgetMode.FRACTION.value)
        try:
            mode = BudgetMode(mode)
        except ValueError:
            raise InstanceError(f"unknown budget_mode {mode!r}")
        return cls(inst, previous, budget, mode)


def budget_from_bytes(budget_bytes: float, host_mem_bytes: float) -> float:
    """Convert a byte budget into host-memory fractions."""
    if host_mem_bytes <= 0:
        raise ValueError(f"host memory size must be > 0, got {host_mem_bytes}")
    if budget_bytes < 0:
        raise ValueError(f"budget must be >= 0, got {budget_bytes}")
    return budget_bytes / host_mem_bytes


def migration_cost(adapt: AdaptationInstance, alloc: Allocation) -> float:
    """Memory moved: sum of mem_need over running tasks placed off their previous host."""
    validate_structure(adapt.inst, alloc)
    total = 0.0
    for key, h in alloc.placement.items():
        before = adapt.previous.get(key)
        if before is not None and before != h:
            total += adapt.inst.jobs[key[0]].mem_need
    return total


def migration_count(adapt: AdaptationInstance, alloc: Allocation) -> int:
    validate_structure(adapt.inst, alloc)
    return sum(
        1
        for key, h in alloc.placement.items()
        if adapt.previous.get(key) is not None and adapt.previous[key] != h
    )


def budget_used(adapt: AdaptationInstance, alloc: Allocation) -> float:
    """Migration cost in the unit the budget is expressed in."""
    if adapt.budget_mode is BudgetMode.COUNT:
        return float(migration_count(adapt, alloc))
    return migration_cost(adapt, alloc)


def exact_adapt_solve(
    adapt: AdaptationInstance,
    limits: Optional[ExactLimits] = None,
    phase2: Optional[Phase2Mode] = None,
) -> SolverOutcome:
    """Best minimum yield over memory-feasible placements within the migration budget.

    Args:
        adapt: Instance, previous placement and budget
        limits: Node budget of the search
        phase2: Average-yield phase applied after the search

    Returns:
        Outcome whose message reports the migration cost used
    """
    limits = limits or ExactLimits()
    inst = adapt.inst
    keys = inst.tasks()

    start = time.perf_counter()
    result = exhaustive_search(
        inst,
        limits,
        move_cost=lambda k, h: adapt.move_charge(keys[k], h),
        cost_budget=adapt.budget,
    )
    elapsed = time.perf_counter() - start
    logger.debug(
        f"Adaptation search visited {result.nodes} nodes with budget {adapt.budget}"
    )

    if result.placement is None:
        return SolverOutcome.failed(
            "exact-adapt", "no placement fits memory within the migration budget", elapsed
        )
    alloc = allocation_at_yield(inst, result.placement, result.value)
    outcome = SolverOutcome.solved(
        "exact-adapt",
        inst,
        alloc,
        elapsed,
        f"migration cost {budget_used(adapt, alloc):.6g} of {adapt.budget:.6g}",
    )
    return finalize(inst, outcome, phase2)


def save_adaptation(adapt: AdaptationInstance, path: PathLike):
    return write_json(adapt.to_dict(), path)


def load_adaptation(path: PathLike) -> AdaptationInstance:
    return AdaptationInstance.from_dict(read_json(path))
