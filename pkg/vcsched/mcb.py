"""Multi-capacity bin packing heuristics MCB1 to MCB8.

At a candidate yield ``y`` every task becomes a two-dimensional item
(``y * cpu_need``, ``mem_need``). Items are split into a CPU-heavy list and
a memory-heavy list, each sorted by the variant's key, and hosts are filled
one at a time, always scanning first the list that works against the
host's current imbalance. ``mcb_solve`` searches for the largest yield at
which the packing succeeds.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from vcsched.bounds import saturation_bound
from vcsched.model import (
    TOL,
    Allocation,
    ProblemInstance,
    SolverOutcome,
    TaskKey,
    allocation_at_yield,
)
from vcsched.parallel import expand_tasks
from vcsched.phase2 import Phase2Mode, finalize

logger = logging.getLogger(__name__)


class SortKey(str, Enum):
    SUM = "sum"
    DIFF = "diff"
    RATIO = "ratio"
    MAX = "max"


class Order(str, Enum):
    ASCENDING = "ascending"
    DESCENDING = "descending"


@dataclass(frozen=True)
class McbVariant:
    name: str
    sort_key: SortKey
    order: Order

    def keys(self, cpu: np.ndarray, mem: np.ndarray) -> np.ndarray:
        """Sort key of every item; ratio is +inf when the smaller demand is zero."""
        hi = np.maximum(cpu, mem)
        lo = np.minimum(cpu, mem)
        if self.sort_key is SortKey.SUM:
            return cpu + mem
        if self.sort_key is SortKey.DIFF:
            return hi - lo
        if self.sort_key is SortKey.MAX:
            return hi
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(lo > 0.0, hi / np.where(lo > 0.0, lo, 1.0), np.inf)

    def ordering(self, cpu: np.ndarray, mem: np.ndarray) -> np.ndarray:
        """Item indices in packing order; ties keep the original order."""
        keys = self.keys(cpu, mem)
        if self.order is Order.DESCENDING:
            keys = -keys
        return np.lexsort((np.arange(len(keys)), keys))


MCB_VARIANTS: Dict[str, McbVariant] = {
    "mcb1": McbVariant("mcb1", SortKey.SUM, Order.ASCENDING),
    "mcb2": McbVariant("mcb2", SortKey.DIFF, Order.ASCENDING),
    "mcb3": McbVariant("mcb3", SortKey.RATIO, Order.ASCENDING),
    "mcb4": McbVariant("mcb4", SortKey.MAX, Order.ASCENDING),
    "mcb5": McbVariant("mcb5", SortKey.SUM, Order.DESCENDING),
    "mcb6": McbVariant("mcb6", SortKey.DIFF, Order.DESCENDING),
    "mcb7": McbVariant("mcb7", SortKey.RATIO, Order.DESCENDING),
    "mcb8": McbVariant("mcb8", SortKey.MAX, Order.DESCENDING),
}


@dataclass(frozen=True)
class BinarySearchConfig:
    tolerance: float = 1e-4
    max_iterations: int = 64

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


class _ItemList:
    """One sorted list of items with a mask of those still unplaced."""

    def __init__(self, indices: np.ndarray, cpu: np.ndarray, mem: np.ndarray):
        self.indices = indices
        self.cpu = cpu[indices]
        self.mem = mem[indices]
        self.alive = np.ones(len(indices), dtype=bool)

    def take_first_fit(self, cpu_left: float, mem_left: float) -> Optional[int]:
        fits = self.alive & (self.cpu <= cpu_left + TOL) & (self.mem <= mem_left + TOL)
        hits = np.flatnonzero(fits)
        if hits.size == 0:
            return None
        pos = int(hits[0])
        self.alive[pos] = False
        return pos


def mcb_pack_at_yield(
    inst: ProblemInstance, y: float, variant: McbVariant
) -> Optional[Allocation]:
    """Pack every task at yield ``y``; None when tasks remain after the last host."""
    if not 0.0 <= y <= 1.0 + TOL:
        raise ValueError(f"yield must lie in [0, 1], got {y}")

    tasks = expand_tasks(inst)
    cpu = np.array([t.cpu_need * y for t in tasks], dtype=float)
    mem = np.array([t.mem_need for t in tasks], dtype=float)

    cpu_heavy = np.flatnonzero(cpu >= mem)
    mem_heavy = np.flatnonzero(cpu < mem)
    lists = (
        _ItemList(cpu_heavy[variant.ordering(cpu[cpu_heavy], mem[cpu_heavy])], cpu, mem),
        _ItemList(mem_heavy[variant.ordering(cpu[mem_heavy], mem[mem_heavy])], cpu, mem),
    )

    placement: Dict[TaskKey, int] = {}
    unplaced = len(tasks)
    for h in range(inst.host_count):
        if unplaced == 0:
            break
        cpu_left, mem_left = 1.0, 1.0
        while unplaced > 0:
            first = 0 if cpu_left >= mem_left else 1
            picked = None
            for which in (first, 1 - first):
                pos = lists[which].take_first_fit(cpu_left, mem_left)
                if pos is not None:
                    picked = (lists[which], pos)
                    break
            if picked is None:
                break
            items, pos = picked
            cpu_left -= float(items.cpu[pos])
            mem_left -= float(items.mem[pos])
            placement[tasks[int(items.indices[pos])].key] = h
            unplaced -= 1

    if unplaced > 0:
        return None
    return allocation_at_yield(inst, placement, y)


@dataclass
class McbSearch:
    """Best packing found by the yield search plus every probe as (y, success)."""

    best_yield: Optional[float] = None
    allocation: Optional[Allocation] = None
    probes: List[Tuple[float, bool]] = field(default_factory=list)


def mcb_search(
    inst: ProblemInstance,
    variant: McbVariant,
    cfg: Optional[BinarySearchConfig] = None,
) -> McbSearch:
    """Probe the saturation bound, then bisect from half of it.

    Packing success is not monotone in the yield, so the best success over
    all probes is kept rather than the last one.
    """
    cfg = cfg or BinarySearchConfig()
    search = McbSearch()

    def probe(y: float) -> bool:
        alloc = mcb_pack_at_yield(inst, y, variant)
        ok = alloc is not None
        search.probes.append((y, ok))
        if ok and (search.best_yield is None or y > search.best_yield):
            search.best_yield = y
            search.allocation = alloc
        return ok

    upper = saturation_bound(inst)
    if probe(upper):
        return search

    lo, hi = 0.0, upper
    for _ in range(cfg.max_iterations):
        if hi - lo < cfg.tolerance:
            break
        mid = (lo + hi) / 2.0
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return search


def mcb_solve(
    inst: ProblemInstance,
    variant: McbVariant,
    cfg: Optional[BinarySearchConfig] = None,
    phase2: Optional[Phase2Mode] = None,
) -> SolverOutcome:
    """Binary search on the yield with one MCB packing per probe.

    Args:
        inst: Instance to solve
        variant: Sort key and order of the packing, see ``MCB_VARIANTS``
        cfg: Search tolerance and iteration cap
        phase2: Average-yield phase applied after the search

    Returns:
        Outcome at the best yield that packed, or a failure if none did
    """
    start = time.perf_counter()
    search = mcb_search(inst, variant, cfg)
    elapsed = time.perf_counter() - start
    logger.debug(
        f"{variant.name.upper()} probed {len(search.probes)} yields, best {search.best_yield}"
    )

    if search.allocation is None:
        return SolverOutcome.failed(
            variant.name, f"no probed yield packs ({len(search.probes)} probes)", elapsed
        )
    outcome = SolverOutcome.solved(
        variant.name,
        inst,
        search.allocation,
        elapsed,
        f"yield {search.best_yield:.6f} after {len(search.probes)} probes",
    )
    return finalize(inst, outcome, phase2)
