# ABOUTME: Provides shared fixtures for the vcsched tests.
# ABOUTME: Small hand-built instances plus a seeded stream of random small instances.

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from vcsched.model import JobSpec, ProblemInstance


def random_small_instance(rng, max_hosts=4, max_tasks=8, mem_scale=0.6):
    """Random instance with at most ``max_hosts`` hosts and ``max_tasks`` tasks."""
    hosts = int(rng.integers(1, max_hosts + 1))
    jobs = int(rng.integers(1, max_tasks + 1))
    return ProblemInstance(
        hosts,
        tuple(
            JobSpec(float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.0, mem_scale)))
            for _ in range(jobs)
        ),
    )


@pytest.fixture
def two_host_example():
    """Two hosts, three CPU-bound jobs needing 60% of a host each, no memory."""
    return ProblemInstance(2, tuple(JobSpec(0.6, 0.0) for _ in range(3)))


@pytest.fixture
def memory_tight_instance():
    """Two hosts where the first-choice greedy placement strands the 0.6 job."""
    return ProblemInstance(
        2, (JobSpec(0.5, 0.5), JobSpec(0.5, 0.5), JobSpec(0.5, 0.6))
    )


@pytest.fixture
def parallel_instance():
    """Three hosts, one three-task job and two single-task jobs."""
    return ProblemInstance(
        3, (JobSpec(0.4, 0.2, 3), JobSpec(0.7, 0.3), JobSpec(0.2, 0.1))
    )


@pytest.fixture
def small_instances():
    """A reproducible batch of random small instances."""
    rng = np.random.default_rng(2024)
    return [random_small_instance(rng) for _ in range(60)]
