"""Name-to-solver registry shared by the CLI and the bench harness."""

from __future__ import annotations

import dataclasses
import logging
import time
from typing import Optional, Tuple

from vcsched.bounds import ExactLimits, exact_solve, relaxed_optimum, relaxed_solution
from vcsched.errors import RelaxedInfeasibleError
from vcsched.greedy import GREEDY_PRESETS, greedy_solve
from vcsched.mcb import MCB_VARIANTS, BinarySearchConfig, mcb_solve
from vcsched.model import ProblemInstance, SolverOutcome
from vcsched.phase2 import Phase2Mode
from vcsched.rounding import RoundingConfig, rrnd_solve, rrnz_solve

logger = logging.getLogger(__name__)

EXACT = "exact"
RELAXED_BOUND = "relaxed-bound"
ROUNDING = ("rrnd", "rrnz")

HEURISTICS: Tuple[str, ...] = (*GREEDY_PRESETS, *ROUNDING, *MCB_VARIANTS)
ALGORITHMS: Tuple[str, ...] = (EXACT, *HEURISTICS)
SOLVE_CHOICES: Tuple[str, ...] = (EXACT, RELAXED_BOUND, *HEURISTICS)


def parse_algorithms(text: str) -> Tuple[str, ...]:
    """Comma-separated names; the group names all, greedy, rounding and mcb expand."""
    groups = {
        "all": HEURISTICS,
        "greedy": tuple(GREEDY_PRESETS),
        "rounding": ROUNDING,
        "mcb": tuple(MCB_VARIANTS),
    }
    names = []
    for part in text.split(","):
        part = part.strip().lower()
        if not part:
            continue
        for name in groups.get(part, (part,)):
            if name not in ALGORITHMS:
                raise ValueError(f"Unknown algorithm: {name}")
            if name not in names:
                names.append(name)
    if not names:
        raise ValueError("No algorithms selected")
    return tuple(names)


def relaxed_bound_outcome(inst: ProblemInstance) -> SolverOutcome:
    start = time.perf_counter()
    try:
        y = relaxed_optimum(inst)
    except RelaxedInfeasibleError as e:
        return SolverOutcome.failed(RELAXED_BOUND, str(e), time.perf_counter() - start)
    return SolverOutcome(
        RELAXED_BOUND,
        True,
        time.perf_counter() - start,
        min_yield=y,
        message="fractional placements allowed",
    )


def _rounding(
    name: str,
    inst: ProblemInstance,
    phase2: Optional[Phase2Mode],
    seed: int,
    retries: int,
) -> SolverOutcome:
    cfg = RoundingConfig(rng_seed=seed)
    start = time.perf_counter()
    try:
        seed_sol = relaxed_solution(inst, cfg.seed_mode)
    except RelaxedInfeasibleError as e:
        return SolverOutcome.failed(name, str(e), time.perf_counter() - start)
    seeding = time.perf_counter() - start

    solve = rrnd_solve if name == "rrnd" else rrnz_solve
    total = seeding
    outcome = None
    for attempt in range(retries):
        attempt_cfg = dataclasses.replace(cfg, rng_seed=seed + attempt)
        outcome = solve(inst, seed_sol, attempt_cfg, phase2)
        total += outcome.wall_time
        if outcome.success:
            break
        logger.debug(f"{name.upper()} attempt {attempt + 1}/{retries} failed")
    return dataclasses.replace(outcome, wall_time=total)


def run_algorithm(
    name: str,
    inst: ProblemInstance,
    phase2: Optional[Phase2Mode] = None,
    seed: int = 1,
    exact_limits: Optional[ExactLimits] = None,
    search: Optional[BinarySearchConfig] = None,
    retries: int = 1,
) -> SolverOutcome:
    """Run one named solver; failures come back as unsuccessful outcomes.

    Args:
        name: Algorithm name from ``SOLVE_CHOICES``
        inst: Instance to solve
        phase2: Average-yield phase (default: chosen from the instance)
        seed: Seed for randomized rounding
        exact_limits: Node budget for the exact oracle
        search: Binary search settings for the MCB variants
        retries: Rounding passes to try before giving up

    Returns:
        The solver outcome, named after ``name``

    Raises:
        TooLargeForExactError: If the exact oracle cannot fit its node budget
    """
    if retries < 1:
        raise ValueError("retries must be >= 1")
    if name == EXACT:
        return exact_solve(inst, exact_limits, phase2)
    if name == RELAXED_BOUND:
        return relaxed_bound_outcome(inst)
    if name in GREEDY_PRESETS:
        return greedy_solve(inst, GREEDY_PRESETS[name], phase2)
    if name in ROUNDING:
        return _rounding(name, inst, phase2, seed, retries)
    if name in MCB_VARIANTS:
        return mcb_solve(inst, MCB_VARIANTS[name], search, phase2)
    raise ValueError(f"Unknown algorithm: {name}")
