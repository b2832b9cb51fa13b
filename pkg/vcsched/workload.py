"""Synthetic workloads: truncated-normal job needs and the experiment grids.

CPU needs have mean 0.5; memory needs have mean ``H * (1 - slack) / J``
(``J`` replaced by the total task count for parallel jobs), so ``slack`` is
the expected fraction of cluster memory left free. Instances are not
guaranteed to be feasible.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from vcsched.errors import WorkloadSpecError
from vcsched.model import (
    RNG_ALGORITHM,
    JobSpec,
    PathLike,
    ProblemInstance,
    load_instance,
    read_json,
    save_instance,
    write_json,
)

logger = logging.getLogger(__name__)

SLACKS: Tuple[float, ...] = tuple(round(0.1 * k, 1) for k in range(1, 10))
COVS: Tuple[float, ...] = (0.25, 0.75)
SMALL_HOSTS = 4
SMALL_JOBS: Tuple[int, ...] = (6, 8, 10, 12)
LARGE_HOSTS = 64
LARGE_JOBS: Tuple[int, ...] = (100, 250, 500)

MANIFEST_NAME = "manifest.json"

_MAX_RESAMPLE_ROUNDS = 10_000


@dataclass(frozen=True)
class TaskCountModel:
    """Two-stage log-uniform task counts biased towards powers of two.

    Draw ``u`` uniformly on [log2(low), log2(high)]; with probability
    ``power_of_two_p`` the count is ``2 ** round(u)``, otherwise
    ``round(2 ** u)``.
    """

    low: int = 1
    high: int = 64
    power_of_two_p: float = 0.75

    def __post_init__(self):
        if not 1 <= self.low <= self.high:
            raise WorkloadSpecError(f"need 1 <= low <= high, got {self.low}, {self.high}")
        if not 0.0 <= self.power_of_two_p <= 1.0:
            raise WorkloadSpecError("power_of_two_p must lie in [0, 1]")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.uniform(np.log2(self.low), np.log2(self.high), size=n)
        snap = rng.random(n) < self.power_of_two_p
        counts = np.where(snap, 2.0 ** np.round(u), np.round(2.0**u))
        return np.clip(counts, self.low, self.high).astype(int)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "low": self.low,
            "high": self.high,
            "power_of_two_p": self.power_of_two_p,
            "rule": (
                "2**round(u) with probability p, else round(2**u); "
                "u ~ U[log2(low), log2(high)]"
            ),
        }


@dataclass(frozen=True)
class ExperimentSpec:
    host_count: int
    job_count: int
    slack: float
    cpu_cov: float = 0.25
    mem_cov: float = 0.25
    cpu_mean: float = 0.5
    parallel: bool = False
    rng_seed: int = 1
    # Fixed memory mean instead of the slack formula.
    mem_mean: Optional[float] = None
    set_name: str = "custom"
    spec_index: int = 0
    task_counts: TaskCountModel = field(default_factory=TaskCountModel)

    def __post_init__(self):
        if self.host_count < 1 or self.job_count < 1:
            raise WorkloadSpecError("host_count and job_count must be >= 1")
        if not 0.0 < self.slack < 1.0:
            raise WorkloadSpecError(f"slack must lie in (0, 1), got {self.slack}")
        if not 0.0 <= self.cpu_mean <= 1.0:
            raise WorkloadSpecError(f"cpu_mean must lie in [0, 1], got {self.cpu_mean}")
        if self.cpu_cov < 0.0 or self.mem_cov < 0.0:
            raise WorkloadSpecError("coefficients of variation must be >= 0")
        if self.mem_mean is not None and not 0.0 <= self.mem_mean <= 1.0:
            raise WorkloadSpecError(f"mem_mean must lie in [0, 1], got {self.mem_mean}")

    @property
    def spec_id(self) -> str:
        return f"{self.set_name}-{self.spec_index}"

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["task_counts"] = self.task_counts.to_dict()
        return data


def truncated_normal(
    rng: np.random.Generator, mean: float, sd: float, size: int
) -> np.ndarray:
    """Normal samples on [0, 1]; out-of-range draws are redrawn, not clamped."""
    if sd == 0.0:
        return np.full(size, float(mean))
    values = rng.normal(mean, sd, size)
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        bad = (values < 0.0) | (values > 1.0)
        if not bad.any():
            return values
        values[bad] = rng.normal(mean, sd, int(bad.sum()))
    raise WorkloadSpecError(
        f"could not draw values in [0, 1] from N({mean}, {sd}) by resampling"
    )


def generate(spec: ExperimentSpec, instance_index: int = 0) -> ProblemInstance:
    """Draw one instance of an experiment setting.

    Args:
        spec: Experiment setting (hosts, jobs, slack, means and CoVs)
        instance_index: Index of the instance within the setting

    Returns:
        The instance, identical for the same (rng_seed, instance_index)

    Raises:
        WorkloadSpecError: If the memory mean implied by the slack exceeds one host
    """
    rng = np.random.default_rng([spec.rng_seed, instance_index])
    J = spec.job_count

    if spec.parallel:
        counts = spec.task_counts.draw(rng, J)
    else:
        counts = np.ones(J, dtype=int)

    mem_mean = spec.mem_mean
    if mem_mean is None:
        mem_mean = spec.host_count * (1.0 - spec.slack) / int(counts.sum())
    if mem_mean > 1.0:
        raise WorkloadSpecError(
            f"memory mean {mem_mean:.4g} exceeds one host; raise slack or add jobs"
        )

    cpu = truncated_normal(rng, spec.cpu_mean, spec.cpu_mean * spec.cpu_cov, J)
    mem = truncated_normal(rng, mem_mean, mem_mean * spec.mem_cov, J)
    jobs = tuple(
        JobSpec(float(c), float(m), int(t)) for c, m, t in zip(cpu, mem, counts)
    )
    return ProblemInstance(spec.host_count, jobs)


def _grid(
    set_name: str,
    host_count: int,
    job_counts: Tuple[int, ...],
    parallel: bool,
    rng_seed: int,
) -> List[ExperimentSpec]:
    specs = []
    for jobs in job_counts:
        for slack in SLACKS:
            for cpu_cov in COVS:
                for mem_cov in COVS:
                    specs.append(
                        ExperimentSpec(
                            host_count=host_count,
                            job_count=jobs,
                            slack=slack,
                            cpu_cov=cpu_cov,
                            mem_cov=mem_cov,
                            parallel=parallel,
                            rng_seed=rng_seed,
                            set_name=set_name,
                            spec_index=len(specs),
                        )
                    )
    return specs


def small_grid(rng_seed: int = 1) -> List[ExperimentSpec]:
    return _grid("small", SMALL_HOSTS, SMALL_JOBS, False, rng_seed)


def large_grid(rng_seed: int = 1) -> List[ExperimentSpec]:
    return _grid("large", LARGE_HOSTS, LARGE_JOBS, False, rng_seed)


def parallel_grid(rng_seed: int = 1) -> List[ExperimentSpec]:
    return _grid("parallel", LARGE_HOSTS, LARGE_JOBS, True, rng_seed)


def grids(rng_seed: int = 1) -> Dict[str, List[ExperimentSpec]]:
    return {
        "small": small_grid(rng_seed),
        "large": large_grid(rng_seed),
        "parallel": parallel_grid(rng_seed),
    }


def instance_name(spec: ExperimentSpec, instance_index: int) -> str:
    return f"{spec.set_name}-{spec.spec_index}-{instance_index}"


def write_workload(
    specs: List[ExperimentSpec], out_dir: PathLike, per_spec: int = 1
) -> Path:
    """Write ``per_spec`` instances of every spec plus a manifest, returning its path."""
    out = Path(out_dir)
    entries = []
    for spec in specs:
        for idx in range(per_spec):
            name = instance_name(spec, idx)
            save_instance(generate(spec, idx), out / f"{name}.json")
            entries.append(
                {
                    "instance_id": name,
                    "file": f"{name}.json",
                    "instance_index": idx,
                    "seed": [spec.rng_seed, idx],
                    "spec": spec.to_dict(),
                }
            )
    logger.info(f"Generated {len(entries)} instances in {out}")
    manifest = {"rng": RNG_ALGORITHM, "instances": entries}
    return write_json(manifest, out / MANIFEST_NAME)


@dataclass(frozen=True)
class WorkloadEntry:
    instance_id: str
    instance: ProblemInstance
    spec_id: Optional[str] = None
    slack: Optional[float] = None

    def __post_init__(self):
        if self.spec_id is None:
            object.__setattr__(self, "spec_id", self.instance_id)


def _spec_id(spec: Dict[str, Any]) -> Optional[str]:
    if "set_name" not in spec:
        return None
    return f"{spec['set_name']}-{spec.get('spec_index', 0)}"


def load_workload(path: PathLike) -> List[WorkloadEntry]:
    """Instances of a workload directory (via its manifest) or a single instance file."""
    path = Path(path)
    if path.is_file():
        return [WorkloadEntry(path.stem, load_instance(path))]

    manifest_path = path / MANIFEST_NAME
    if manifest_path.is_file():
        manifest = read_json(manifest_path)
        return [
            WorkloadEntry(
                entry["instance_id"],
                load_instance(path / entry["file"]),
                _spec_id(entry.get("spec", {})),
                entry.get("spec", {}).get("slack"),
            )
            for entry in manifest["instances"]
        ]

    files = sorted(p for p in path.glob("*.json") if p.name != MANIFEST_NAME)
    if not files:
        raise FileNotFoundError(f"No instances found in {path}")
    return [WorkloadEntry(p.stem, load_instance(p)) for p in files]
