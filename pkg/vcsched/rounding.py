"""Randomized rounding RRND and RRNZ from a fractional relaxed solution.

Each task of job ``i`` is sent to a host drawn with probability
proportional to the seed's ``e[i, h]``; a host whose memory cannot admit
the task is dropped and the draw repeated over the rest. RRNZ lifts every
zero weight to ``epsilon`` first, so hosts the seed ignored stay reachable.

Sampling is an exponential race: a task draws one Exp(1) variate per host
and tries hosts in increasing ``E_h / w_h`` order, which is the same
distribution as drawing, dropping and renormalising. Both variants consume
exactly ``host_count`` variates per task, so with the same seed they see
the same stream and can be replayed against each other.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from vcsched.bounds import RelaxedSolution, SeedMode
from vcsched.model import (
    TOL,
    ProblemInstance,
    SolverOutcome,
    TaskKey,
    allocation_at_yield,
    placement_yield,
)
from vcsched.parallel import expand_tasks
from vcsched.phase2 import Phase2Mode, finalize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundingConfig:
    epsilon: float = 0.01
    rng_seed: int = 1
    seed_mode: SeedMode = SeedMode.SPARSE

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        object.__setattr__(self, "seed_mode", SeedMode(self.seed_mode))


@dataclass(frozen=True)
class RoundingResult:
    outcome: SolverOutcome
    # Tasks placed on a host whose seed weight was zero (always 0 for RRND).
    epsilon_picks: int


def _weight_matrix(inst: ProblemInstance, seed_sol: RelaxedSolution) -> np.ndarray:
    weights = np.vstack(
        [seed_sol.host_weights(i, inst.host_count) for i in range(inst.job_count)]
    )
    return np.clip(weights, 0.0, None)


def _round(
    inst: ProblemInstance,
    seed_sol: RelaxedSolution,
    cfg: RoundingConfig,
    name: str,
    epsilon: Optional[float],
    phase2: Optional[Phase2Mode],
) -> RoundingResult:
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.rng_seed)
    weights = _weight_matrix(inst, seed_sol)
    seeded = weights > 0.0
    if epsilon is not None:
        weights = np.where(seeded, weights, epsilon)

    mem_used = np.zeros(inst.host_count)
    placement: Dict[TaskKey, int] = {}
    epsilon_picks = 0

    for task in expand_tasks(inst):
        race = rng.standard_exponential(inst.host_count)
        row = weights[task.job]
        with np.errstate(divide="ignore"):
            keys = np.where(row > 0.0, race / np.where(row > 0.0, row, 1.0), np.inf)
        admits = (mem_used + task.mem_need <= 1.0 + TOL) & np.isfinite(keys)
        if not admits.any():
            elapsed = time.perf_counter() - start
            logger.debug(
                f"{name.upper()} stuck at task {task.key} after {epsilon_picks} epsilon picks"
            )
            return RoundingResult(
                SolverOutcome.failed(
                    name, f"no admissible host left for task {task.key}", elapsed
                ),
                epsilon_picks,
            )
        h = int(np.argmin(np.where(admits, keys, np.inf)))
        mem_used[h] += task.mem_need
        placement[task.key] = h
        if not seeded[task.job, h]:
            epsilon_picks += 1

    alloc = allocation_at_yield(inst, placement, placement_yield(inst, placement))
    elapsed = time.perf_counter() - start
    outcome = SolverOutcome.solved(
        name, inst, alloc, elapsed, f"{epsilon_picks} epsilon picks"
    )
    return RoundingResult(finalize(inst, outcome, phase2), epsilon_picks)


def rrnd_round(
    inst: ProblemInstance,
    seed_sol: RelaxedSolution,
    cfg: Optional[RoundingConfig] = None,
    phase2: Optional[Phase2Mode] = None,
) -> RoundingResult:
    return _round(inst, seed_sol, cfg or RoundingConfig(), "rrnd", None, phase2)


def rrnz_round(
    inst: ProblemInstance,
    seed_sol: RelaxedSolution,
    cfg: Optional[RoundingConfig] = None,
    phase2: Optional[Phase2Mode] = None,
) -> RoundingResult:
    cfg = cfg or RoundingConfig()
    return _round(inst, seed_sol, cfg, "rrnz", cfg.epsilon, phase2)


def rrnd_solve(
    inst: ProblemInstance,
    seed_sol: RelaxedSolution,
    cfg: Optional[RoundingConfig] = None,
    phase2: Optional[Phase2Mode] = None,
) -> SolverOutcome:
    """One rounding pass; zero-weight hosts are never drawn."""
    return rrnd_round(inst, seed_sol, cfg, phase2).outcome


def rrnz_solve(
    inst: ProblemInstance,
    seed_sol: RelaxedSolution,
    cfg: Optional[RoundingConfig] = None,
    phase2: Optional[Phase2Mode] = None,
) -> SolverOutcome:
    """One rounding pass with zero weights lifted to ``cfg.epsilon``."""
    return rrnz_round(inst, seed_sol, cfg, phase2).outcome

