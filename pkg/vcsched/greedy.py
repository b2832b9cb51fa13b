"""Greedy placement heuristics GR, SG, GB and SGB.

Each task goes to the least CPU-loaded host (by total CPU need already
placed there, ties to the lower index) whose memory still admits it.
SG and SGB first sort tasks by decreasing memory need; GB and SGB back
track depth-first when a task fits nowhere, up to a bound on the number of
placement attempts.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from vcsched.model import (
    TOL,
    ProblemInstance,
    SolverOutcome,
    TaskKey,
    allocation_at_yield,
    placement_yield,
)
from vcsched.parallel import TaskItem, expand_tasks
from vcsched.phase2 import Phase2Mode, finalize

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 500_000


@dataclass(frozen=True)
class GreedyConfig:
    sort_by_memory_desc: bool = False
    backtracking: bool = False
    max_placement_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self):
        if self.max_placement_attempts < 1:
            raise ValueError("max_placement_attempts must be >= 1")

    @property
    def name(self) -> str:
        if self.backtracking:
            return "sgb" if self.sort_by_memory_desc else "gb"
        return "sg" if self.sort_by_memory_desc else "gr"


GREEDY_PRESETS: Dict[str, GreedyConfig] = {
    "gr": GreedyConfig(),
    "sg": GreedyConfig(sort_by_memory_desc=True),
    "gb": GreedyConfig(backtracking=True),
    "sgb": GreedyConfig(sort_by_memory_desc=True, backtracking=True),
}


def _place(
    tasks: List[TaskItem], host_count: int, cfg: GreedyConfig
) -> Tuple[Optional[Dict[TaskKey, int]], int, str]:
    """Returns (placement or None, attempts used, failure reason)."""
    n = len(tasks)
    cpu = [0.0] * host_count
    mem = [0.0] * host_count
    # Per task: [ranked hosts, next position, chosen host, cpu before, mem before]
    frames: List[list] = []
    attempts = 0
    k = 0

    while k < n:
        if len(frames) == k:
            ranked = sorted(range(host_count), key=lambda h: (cpu[h], h))
            frames.append([ranked, 0, -1, 0.0, 0.0])
        frame = frames[k]
        task = tasks[k]

        placed = False
        while frame[1] < host_count:
            h = frame[0][frame[1]]
            frame[1] += 1
            attempts += 1
            if attempts > cfg.max_placement_attempts:
                return None, attempts, "placement attempt bound exhausted"
            if mem[h] + task.mem_need <= 1.0 + TOL:
                frame[2], frame[3], frame[4] = h, cpu[h], mem[h]
                cpu[h] += task.cpu_need
                mem[h] += task.mem_need
                placed = True
                break

        if placed:
            k += 1
            continue
        if not cfg.backtracking:
            return None, attempts, f"no host admits task {task.key}"

        frames.pop()
        if k == 0:
            return None, attempts, "no memory-feasible placement exists"
        k -= 1
        previous = frames[k]
        h = previous[2]
        cpu[h], mem[h] = previous[3], previous[4]

    placement = {tasks[k].key: frames[k][2] for k in range(n)}
    return placement, attempts, ""


def greedy_solve(
    inst: ProblemInstance,
    cfg: Optional[GreedyConfig] = None,
    phase2: Optional[Phase2Mode] = None,
) -> SolverOutcome:
    """Place tasks greedily, then grant the placement's best uniform yield.

    Args:
        inst: Instance to solve
        cfg: Memory sorting, backtracking and attempt bound (default: GR)
        phase2: Average-yield phase applied after placement

    Returns:
        Outcome whose message reports the placement attempts used
    """
    cfg = cfg or GreedyConfig()
    start = time.perf_counter()

    tasks = expand_tasks(inst)
    if cfg.sort_by_memory_desc:
        tasks = sorted(tasks, key=lambda t: -t.mem_need)
    placement, attempts, reason = _place(tasks, inst.host_count, cfg)

    if placement is None:
        elapsed = time.perf_counter() - start
        logger.debug(f"{cfg.name.upper()} failed after {attempts} attempts: {reason}")
        return SolverOutcome.failed(cfg.name, reason, elapsed)

    alloc = allocation_at_yield(inst, placement, placement_yield(inst, placement))
    elapsed = time.perf_counter() - start
    outcome = SolverOutcome.solved(
        cfg.name, inst, alloc, elapsed, f"{attempts} placement attempts"
    )
    return finalize(inst, outcome, phase2)
