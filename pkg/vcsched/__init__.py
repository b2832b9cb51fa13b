"""Max-min fair placement of virtual clusters on identical hosts."""

from vcsched.model import (
    Allocation,
    JobSpec,
    ProblemInstance,
    SolverOutcome,
    check_feasible,
    evaluate,
)

__all__ = [
    "Allocation",
    "JobSpec",
    "ProblemInstance",
    "SolverOutcome",
    "check_feasible",
    "evaluate",
]
