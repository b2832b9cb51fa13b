# ABOUTME: Tests the greedy placement heuristics GR, SG, GB and SGB.
# ABOUTME: Covers host ranking, memory sorting, backtracking and the attempt bound.

import sys
import pytest
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from vcsched.bounds import exact_solve
from vcsched.greedy import GREEDY_PRESETS, GreedyConfig, greedy_solve
from vcsched.model import JobSpec, ProblemInstance, check_feasible
from vcsched.phase2 import Phase2Mode


class TestGreedyConfig:
    """Test configuration presets."""

    def test_preset_names(self):
        """Each preset reports its own name."""
        assert {name: cfg.name for name, cfg in GREEDY_PRESETS.items()} == {
            "gr": "gr",
            "sg": "sg",
            "gb": "gb",
            "sgb": "sgb",
        }

    def test_attempt_bound_must_be_positive(self):
        """A zero attempt bound is rejected."""
        with pytest.raises(ValueError):
            GreedyConfig(max_placement_attempts=0)


class TestGreedySolve:
    """Test greedy placement."""

    def test_least_loaded_host(self, two_host_example):
        """Tasks spread over the least loaded hosts; ties go to the lower index."""
        outcome = greedy_solve(two_host_example, GREEDY_PRESETS["gr"], Phase2Mode.OFF)
        assert outcome.success
        placement = outcome.allocation.placement
        assert [placement[(i, 0)] for i in range(3)] == [0, 1, 0]
        assert outcome.min_yield == pytest.approx(5 / 6)

    def test_gr_strands_large_job(self, memory_tight_instance):
        """Plain greedy fills both hosts to 0.5 memory and cannot place the 0.6 job."""
        outcome = greedy_solve(memory_tight_instance, GREEDY_PRESETS["gr"])
        assert not outcome.success
        assert "no host admits task (2, 0)" in outcome.message

    def test_sg_places_large_job_first(self, memory_tight_instance):
        """Sorting by memory puts the 0.6 job down before the others."""
        outcome = greedy_solve(memory_tight_instance, GREEDY_PRESETS["sg"])
        assert outcome.success
        assert check_feasible(memory_tight_instance, outcome.allocation) == []

    @pytest.mark.parametrize("name", ["sg", "sgb"])
    def test_memory_sort_keeps_job_order_on_ties(self, name):
        """Jobs with equal memory keep their input order."""
        inst = ProblemInstance(
            2, (JobSpec(0.3, 0.4), JobSpec(0.9, 0.4), JobSpec(0.2, 0.5))
        )
        outcome = greedy_solve(inst, GREEDY_PRESETS[name], Phase2Mode.OFF)
        assert outcome.success
        # Job 2 first, then job 0 before job 1.
        assert dict(outcome.allocation.placement) == {(2, 0): 0, (0, 0): 1, (1, 0): 0}

    def test_host_ranking_per_task(self):
        """Tasks of one job each go to the host least loaded at that moment."""
        inst = ProblemInstance(2, (JobSpec(0.5, 0.0, 2),))
        outcome = greedy_solve(inst, GREEDY_PRESETS["gr"], Phase2Mode.OFF)
        assert dict(outcome.allocation.placement) == {(0, 0): 0, (0, 1): 1}

    def test_gb_backtracks(self, memory_tight_instance):
        """Backtracking moves the second job next to the first."""
        outcome = greedy_solve(memory_tight_instance, GREEDY_PRESETS["gb"], Phase2Mode.OFF)
        assert outcome.success
        placement = outcome.allocation.placement
        assert placement[(0, 0)] == placement[(1, 0)] == 0
        assert placement[(2, 0)] == 1
        assert outcome.min_yield == pytest.approx(1.0)

    def test_attempt_bound(self, memory_tight_instance):
        """Backtracking gives up once the attempt bound is spent."""
        cfg = GreedyConfig(backtracking=True, max_placement_attempts=3)
        outcome = greedy_solve(memory_tight_instance, cfg)
        assert not outcome.success
        assert "attempt bound" in outcome.message

    def test_infeasible_instance(self):
        """Backtracking exhausts every placement of an infeasible instance."""
        inst = ProblemInstance(2, tuple(JobSpec(0.2, 0.6) for _ in range(3)))
        outcome = greedy_solve(inst, GREEDY_PRESETS["sgb"])
        assert not outcome.success

    def test_message_reports_attempts(self, two_host_example):
        """Successful outcomes say how many placement attempts were used."""
        outcome = greedy_solve(two_host_example, GREEDY_PRESETS["gr"])
        assert outcome.message == "3 placement attempts"

    def test_phase2_raises_average(self, two_host_example):
        """Phase 2 hands spare CPU out without lowering the minimum."""
        off = greedy_solve(two_host_example, GREEDY_PRESETS["gr"], Phase2Mode.OFF)
        on = greedy_solve(two_host_example, GREEDY_PRESETS["gr"], Phase2Mode.PER_TASK)
        assert on.min_yield == pytest.approx(off.min_yield)
        assert on.avg_task_yield > off.avg_task_yield

    def test_deterministic(self, small_instances):
        """Same instance and config, same allocation."""
        for inst in small_instances[:10]:
            first = greedy_solve(inst, GREEDY_PRESETS["sgb"])
            second = greedy_solve(inst, GREEDY_PRESETS["sgb"])
            assert first.allocation == second.allocation


class TestGreedyAgainstExact:
    """Compare greedy heuristics with the exact oracle."""

    @pytest.mark.parametrize("name", ["gr", "sg", "gb", "sgb"])
    def test_never_beats_exact(self, name, small_instances):
        """Greedy successes are feasible and bounded by the optimum."""
        for inst in small_instances:
            outcome = greedy_solve(inst, GREEDY_PRESETS[name], Phase2Mode.OFF)
            if not outcome.success:
                continue
            assert check_feasible(inst, outcome.allocation) == []
            best = exact_solve(inst, phase2=Phase2Mode.OFF)
            assert outcome.min_yield <= best.min_yield + 1e-9

    @pytest.mark.parametrize("name", ["gb", "sgb"])
    def test_backtracking_is_complete(self, name, small_instances):
        """GB and SGB succeed whenever some memory-feasible placement exists."""
        for inst in small_instances:
            if exact_solve(inst, phase2=Phase2Mode.OFF).success:
                assert greedy_solve(inst, GREEDY_PRESETS[name]).success
