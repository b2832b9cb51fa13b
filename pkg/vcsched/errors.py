"""Exception hierarchy for the scheduling engine.

Solver failures are reported through ``SolverOutcome`` rather than raised;
the exceptions below signal misuse, malformed inputs, or limits.
"""


class VCSchedError(Exception):
    """Base class for all engine errors."""


class InstanceError(VCSchedError, ValueError):
    """Invalid job, instance, or file contents."""


class StructuralError(VCSchedError):
    """Allocation references a job, task, or host that does not exist."""


class RelaxedInfeasibleError(VCSchedError):
    """Total memory demand exceeds the total memory of all hosts."""


class TooLargeForExactError(VCSchedError):
    """Exhaustive search would exceed its enumeration budget."""


class InfeasibleAllocationError(VCSchedError):
    """An allocation handed to phase 2 violates constraints or its yield floor."""


class WorkloadSpecError(VCSchedError, ValueError):
    """Generator parameters outside their valid domain."""
