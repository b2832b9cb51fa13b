# ABOUTME: Tests randomized rounding RRND and RRNZ from fractional seed solutions.
# ABOUTME: Uses hand-built seeds, sampling frequencies and same-stream replays.

import sys
import pytest
import numpy as np
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from tests.conftest import random_small_instance
from vcsched.bounds import RelaxedSolution, SeedMode, exact_solve, relaxed_solution
from vcsched.errors import RelaxedInfeasibleError
from vcsched.model import JobSpec, ProblemInstance, check_feasible
from vcsched.phase2 import Phase2Mode
from vcsched.rounding import (
    RoundingConfig,
    rrnd_round,
    rrnd_solve,
    rrnz_round,
    rrnz_solve,
)


def seed_on(inst, weights):
    """Seed solution giving every job the same host weights."""
    e = {
        (i, h): w
        for i in range(inst.job_count)
        for h, w in enumerate(weights)
        if w > 0.0
    }
    return RelaxedSolution(1.0, e, {}, "sparse")


class TestRoundingConfig:
    """Test configuration validation."""

    @pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.5])
    def test_epsilon_range(self, epsilon):
        """Epsilon must lie strictly between 0 and 1."""
        with pytest.raises(ValueError):
            RoundingConfig(epsilon=epsilon)

    def test_seed_mode_coerced(self):
        """String seed modes are accepted."""
        assert RoundingConfig(seed_mode="uniform").seed_mode is SeedMode.UNIFORM


class TestRrnd:
    """Test rounding that never draws zero-weight hosts."""

    def test_degenerate_seed(self):
        """A seed concentrated on host 0 puts every task there."""
        inst = ProblemInstance(2, tuple(JobSpec(0.2, 0.3) for _ in range(3)))
        result = rrnd_round(inst, seed_on(inst, [1.0, 0.0]), phase2=Phase2Mode.OFF)
        assert result.outcome.success
        assert set(result.outcome.allocation.placement.values()) == {0}
        assert result.epsilon_picks == 0

    def test_stuck_without_seeded_host(self):
        """With host 0 full and host 1 unseeded, the second task has nowhere to go."""
        inst = ProblemInstance(2, (JobSpec(0.2, 0.6), JobSpec(0.2, 0.6)))
        outcome = rrnd_solve(inst, seed_on(inst, [1.0, 0.0]))
        assert not outcome.success
        assert "no admissible host left for task (1, 0)" in outcome.message

    def test_one_host_two_large_jobs(self):
        """Memory overflow on a single host fails."""
        inst = ProblemInstance(1, (JobSpec(0.2, 0.6), JobSpec(0.2, 0.6)))
        assert not rrnd_solve(inst, seed_on(inst, [1.0])).success

    def test_sampling_frequency(self):
        """Hosts are drawn in proportion to their seed weight."""
        inst = ProblemInstance(2, (JobSpec(0.5, 0.0),))
        seed = seed_on(inst, [0.75, 0.25])
        hits = 0
        for s in range(1000):
            outcome = rrnd_solve(inst, seed, RoundingConfig(rng_seed=s), Phase2Mode.OFF)
            hits += outcome.allocation.placement[(0, 0)] == 0
        assert hits / 1000 == pytest.approx(0.75, abs=0.04)

    def test_reproducible(self, small_instances):
        """Same seed, same allocation."""
        for inst in small_instances[:10]:
            try:
                seed = relaxed_solution(inst)
            except RelaxedInfeasibleError:
                continue
            cfg = RoundingConfig(rng_seed=42)
            assert rrnd_solve(inst, seed, cfg).allocation == rrnd_solve(
                inst, seed, cfg
            ).allocation


class TestRrnz:
    """Test rounding with zero weights lifted to epsilon."""

    def test_reaches_unseeded_host(self):
        """The second large job lands on the host the seed ignored."""
        inst = ProblemInstance(2, (JobSpec(0.2, 0.6), JobSpec(0.2, 0.6)))
        result = rrnz_round(inst, seed_on(inst, [1.0, 0.0]), phase2=Phase2Mode.OFF)
        assert result.outcome.success
        assert result.epsilon_picks >= 1
        assert check_feasible(inst, result.outcome.allocation) == []

    def test_epsilon_frequency(self):
        """Unseeded hosts are drawn about epsilon / (1 + epsilon) of the time."""
        inst = ProblemInstance(2, (JobSpec(0.5, 0.0),))
        seed = seed_on(inst, [1.0, 0.0])
        picks = 0
        for s in range(2000):
            picks += rrnz_round(inst, seed, RoundingConfig(rng_seed=s)).epsilon_picks
        assert 5 < picks < 45

    def test_one_host_two_large_jobs(self):
        """Epsilon cannot create memory that does not exist."""
        inst = ProblemInstance(1, (JobSpec(0.2, 0.6), JobSpec(0.2, 0.6)))
        assert not rrnz_solve(inst, seed_on(inst, [1.0])).success

    def test_replays_rrnd_without_epsilon_picks(self, small_instances):
        """With no epsilon pick RRNZ makes exactly RRND's choices on the same stream."""
        replayed = 0
        for inst in small_instances:
            try:
                seed = relaxed_solution(inst)
            except RelaxedInfeasibleError:
                continue
            for s in range(3):
                cfg = RoundingConfig(rng_seed=s)
                nz = rrnz_round(inst, seed, cfg, Phase2Mode.OFF)
                if nz.epsilon_picks:
                    continue
                nd = rrnd_round(inst, seed, cfg, Phase2Mode.OFF)
                assert nd.outcome.success == nz.outcome.success
                assert nd.outcome.allocation == nz.outcome.allocation
                replayed += 1
        assert replayed > 0

    @pytest.mark.timeout(120)
    def test_rrnz_rarely_loses_what_rrnd_wins(self):
        """RRND-only successes are rare and always follow an epsilon pick."""
        rng = np.random.default_rng(31)
        draws = 0
        rrnd_only = 0
        for _ in range(200):
            inst = random_small_instance(rng)
            try:
                seed = relaxed_solution(inst)
            except RelaxedInfeasibleError:
                continue
            for s in range(5):
                cfg = RoundingConfig(rng_seed=s)
                nd = rrnd_round(inst, seed, cfg, Phase2Mode.OFF)
                nz = rrnz_round(inst, seed, cfg, Phase2Mode.OFF)
                draws += 1
                if nd.outcome.success and not nz.outcome.success:
                    assert nz.epsilon_picks >= 1
                    rrnd_only += 1
        assert draws > 400
        assert rrnd_only <= 0.01 * draws


class TestRoundingQuality:
    """Compare rounding results with the exact oracle."""

    @pytest.mark.parametrize("solve", [rrnd_solve, rrnz_solve])
    def test_feasible_and_bounded(self, solve, small_instances):
        """Successes are feasible and never beat the optimum."""
        for inst in small_instances[:30]:
            try:
                seed = relaxed_solution(inst)
            except RelaxedInfeasibleError:
                continue
            outcome = solve(inst, seed, RoundingConfig(rng_seed=3), Phase2Mode.OFF)
            if not outcome.success:
                continue
            assert check_feasible(inst, outcome.allocation) == []
            best = exact_solve(inst, phase2=Phase2Mode.OFF)
            assert outcome.min_yield <= best.min_yield + 1e-9
