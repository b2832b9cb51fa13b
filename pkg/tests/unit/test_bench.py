# ABOUTME: Tests the experiment harness: suite runs, result files and aggregation.
# ABOUTME: Covers failure accounting, degradation from best, slack summaries and figure data.

import sys
import pytest
import pandas as pd
from pathlib import Path
from unittest.mock import patch

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from vcsched.bench import (
    INSTANCES_FILE,
    METADATA_FILE,
    RESULTS_FILE,
    TIMINGS_FILE,
    Outcome,
    ReferenceMode,
    ResultRecord,
    SuiteOptions,
    SuiteRunner,
    cell_seed,
    degradation,
    emit_csv,
    figure_data,
    instances_frame,
    parse_csv,
    read_results,
    run_suite,
    suite_metadata,
    summarize_by_slack,
    write_results,
)
from vcsched.model import JobSpec, ProblemInstance, SolverOutcome, allocation_at_yield
from vcsched.workload import WorkloadEntry


def record(instance_id, algorithm, min_yield, runtime=0.01, spec_id="s"):
    """A successful record, or a failed one when ``min_yield`` is None."""
    if min_yield is None:
        return ResultRecord(
            spec_id, instance_id, algorithm, Outcome.FAILURE, runtime_s=runtime
        )
    return ResultRecord(
        spec_id,
        instance_id,
        algorithm,
        Outcome.SUCCESS,
        min_yield=min_yield,
        avg_task_yield=min_yield,
        avg_job_yield=min_yield,
        runtime_s=runtime,
        relaxed_bound=1.0,
    )


@pytest.fixture
def entry(two_host_example):
    return WorkloadEntry("two-host", two_host_example, "demo-0", 0.5)


class TestResultRecord:
    """Test record validation."""

    def test_failure_without_yields(self):
        """Failures carry no yields."""
        rec = record("i", "gr", None)
        assert not rec.success
        assert rec.min_yield is None

    def test_success_needs_yields(self):
        """A success without a yield is rejected."""
        with pytest.raises(ValueError):
            ResultRecord("s", "i", "gr", Outcome.SUCCESS)

    def test_failure_with_yields(self):
        """A failure with a yield is rejected."""
        with pytest.raises(ValueError):
            ResultRecord("s", "i", "gr", "failure", min_yield=0.5)


class TestSuiteOptions:
    """Test option validation."""

    def test_needs_algorithms(self):
        """An empty algorithm list is rejected."""
        with pytest.raises(ValueError):
            SuiteOptions(())

    def test_spot_check_rate(self):
        """Spot-check rate is a probability."""
        with pytest.raises(ValueError):
            SuiteOptions(("gr",), spot_check_rate=2.0)

    def test_modes_coerced(self):
        """String modes become enums."""
        options = SuiteOptions(("gr",), phase2="off", reference="on")
        assert options.reference is ReferenceMode.ON
        assert options.phase2.value == "off"


class TestRunSuite:
    """Test running suites."""

    def test_one_record_per_cell(self, entry):
        """One instance and two algorithms give two records with references."""
        options = SuiteOptions(("gr", "mcb8"), repetitions=1)
        records = run_suite([entry], options)
        assert [r.algorithm for r in records] == ["gr", "mcb8"]
        assert all(r.success for r in records)
        assert records[0].exact_opt == pytest.approx(5 / 6)
        assert records[0].relaxed_bound == 1.0
        assert records[0].spec_id == "demo-0"

    def test_memory_infeasible_instance(self):
        """Instances that cannot fit memory are flagged infeasible, not failed."""
        inst = ProblemInstance(1, (JobSpec(0.1, 0.6), JobSpec(0.1, 0.6)))
        runner = SuiteRunner(SuiteOptions(("gr", "mcb1"), repetitions=1), show_progress=False)
        records = runner.run([WorkloadEntry("tight", inst)])
        assert {r.outcome for r in records} == {Outcome.INFEASIBLE}
        assert runner.stats["infeasible"] == 2
        assert records[0].relaxed_bound is None

    def test_solver_exception_is_recorded(self, entry):
        """A crashing solver becomes a failed record and an error count."""
        runner = SuiteRunner(SuiteOptions(("gr",), repetitions=1), show_progress=False)
        with patch("vcsched.bench.run_algorithm", side_effect=RuntimeError("boom")):
            records = runner.run([entry])
        assert records[0].outcome is Outcome.FAILURE
        assert runner.stats["errors"] == 1
        assert runner.stats["cells"] == 1

    def test_invalid_allocation_is_caught(self, entry, two_host_example):
        """Spot checks turn an overcommitted allocation into a failure."""
        alloc = allocation_at_yield(
            two_host_example, {(0, 0): 0, (1, 0): 0, (2, 0): 1}, 1.0
        )
        bad = SolverOutcome(
            "gr", True, 0.0, alloc, min_yield=1.0, avg_task_yield=1.0, avg_job_yield=1.0
        )
        options = SuiteOptions(("gr",), repetitions=1, spot_check_rate=1.0)
        runner = SuiteRunner(options, show_progress=False)
        with patch("vcsched.bench.run_algorithm", return_value=bad):
            records = runner.run([entry])
        assert records[0].outcome is Outcome.FAILURE
        assert runner.stats["invalid"] == 1

    def test_median_runtime(self, entry):
        """Runtime is the median over repetitions."""
        outcomes = [
            SolverOutcome.failed("gr", "x", wall_time=t) for t in (0.3, 0.1, 0.2)
        ]
        runner = SuiteRunner(SuiteOptions(("gr",), repetitions=3), show_progress=False)
        with patch("vcsched.bench.run_algorithm", side_effect=outcomes):
            records = runner.run([entry])
        assert records[0].runtime_s == pytest.approx(0.2)

    def test_reference_off(self, entry):
        """Without references no exact optimum is recorded."""
        options = SuiteOptions(("gr",), repetitions=1, reference=ReferenceMode.OFF)
        assert run_suite([entry], options)[0].exact_opt is None

    def test_parallel_workers_keep_order(self, small_instances):
        """Records come back in input order whatever the worker count."""
        entries = [WorkloadEntry(f"i{n}", inst) for n, inst in enumerate(small_instances[:8])]
        options = SuiteOptions(("sg", "mcb8"), repetitions=1, workers=4)
        records = run_suite(entries, options)
        assert [r.instance_id for r in records[::2]] == [e.instance_id for e in entries]

    def test_cell_seed(self):
        """Seeds depend on base seed and instance only."""
        assert cell_seed(1, "a") == cell_seed(1, "a")
        assert cell_seed(1, "a") != cell_seed(1, "b")
        assert cell_seed(1, "a") != cell_seed(2, "a")
        assert 0 <= cell_seed(1, "a") < 2**63


class TestDegradation:
    """Test degradation from best."""

    def test_two_algorithms(self):
        """0.8 against a best of 1.0 is twenty percent below."""
        table = degradation([record("i", "a", 0.8), record("i", "b", 1.0)])
        assert table.algorithms == ["a", "b"]
        assert table.row("a")["avg_degradation"] == pytest.approx(20.0)
        assert table.row("b")["avg_degradation"] == pytest.approx(0.0)

    def test_failures_left_out(self):
        """A failed instance does not count against the failing algorithm's average."""
        records = [
            record("i1", "a", 0.5),
            record("i1", "b", 1.0),
            record("i2", "a", None),
            record("i2", "b", 0.9),
        ]
        table = degradation(records)
        row = table.row("a")
        assert row["avg_degradation"] == pytest.approx(50.0)
        assert row["max_degradation"] == pytest.approx(50.0)
        assert row["solved"] == 1
        assert row["instances"] == 2

    def test_references_excluded(self):
        """Exact results do not set the best."""
        records = [record("i", "a", 0.8), record("i", "b", 0.4), record("i", "exact", 1.0)]
        table = degradation(records)
        assert "exact" not in table.algorithms
        assert table.row("a")["avg_degradation"] == pytest.approx(0.0)

    def test_empty_input(self):
        """Nothing to compare is an error."""
        with pytest.raises(ValueError):
            degradation([])

    def test_unknown_row(self):
        """Asking for a missing algorithm raises KeyError."""
        table = degradation([record("i", "a", 0.8), record("i", "b", 1.0)])
        with pytest.raises(KeyError):
            table.row("c")


class TestResultFiles:
    """Test CSV and result directory handling."""

    def test_csv_round_trip(self):
        """Records survive emit_csv and parse_csv unchanged."""
        records = [record("i1", "a", 0.123456789012345), record("i1", "b", None, 0.5)]
        assert parse_csv(emit_csv(records)) == records

    def test_results_leave_runtime_out(self, tmp_path):
        """results.csv is deterministic; runtimes live in timings.csv."""
        records = [record("i1", "a", 0.7, 1.25)]
        write_results(records, tmp_path)
        assert "runtime_s" not in (tmp_path / RESULTS_FILE).read_text()
        assert "1.25" in (tmp_path / TIMINGS_FILE).read_text()

    def test_write_and_read(self, tmp_path, entry):
        """A results directory reads back with runtimes, instances and metadata."""
        options = SuiteOptions(("gr", "sg"), repetitions=1)
        runner = SuiteRunner(options, show_progress=False)
        records = runner.run([entry])
        write_results(records, tmp_path, [entry], suite_metadata(options, runner.stats))
        assert (tmp_path / INSTANCES_FILE).exists()
        assert (tmp_path / METADATA_FILE).exists()

        loaded = read_results(tmp_path / RESULTS_FILE)
        assert loaded.records == records
        assert list(loaded.instances["instance_id"]) == ["two-host"]
        assert loaded.metadata["counts"]["cells"] == 2
        assert loaded.metadata["rng"] == "numpy.PCG64"

    def test_missing_timings(self, tmp_path):
        """Without timings.csv runtimes read as zero."""
        write_results([record("i1", "a", 0.7, 1.25)], tmp_path)
        (tmp_path / TIMINGS_FILE).unlink()
        assert read_results(tmp_path).records[0].runtime_s == 0.0

    def test_missing_results(self, tmp_path):
        """An empty directory has no results."""
        with pytest.raises(FileNotFoundError):
            read_results(tmp_path)


class TestSummaries:
    """Test slack summaries and figure data."""

    def test_summarize_by_slack(self):
        """Yield means count successes only; failures raise the failure rate."""
        records = [
            record("i1", "a", 0.6),
            record("i2", "a", None),
            record("i1", "b", 0.8),
            record("i2", "b", 1.0),
        ]
        summary = summarize_by_slack(records, {"i1": 0.3, "i2": 0.3})
        a = summary[summary["algorithm"] == "a"].iloc[0]
        b = summary[summary["algorithm"] == "b"].iloc[0]
        assert a["min_yield"] == pytest.approx(0.6)
        assert a["failure_rate"] == pytest.approx(0.5)
        assert b["min_yield"] == pytest.approx(0.9)
        assert b["count"] == 2

    def test_unknown_slack_dropped(self):
        """Instances without a slack are left out."""
        assert summarize_by_slack([record("i1", "a", 0.6)], {}).empty

    def test_min_yield_figure_adds_bound(self, entry):
        """The minimum yield figure carries the relaxed bound as its own series."""
        records = [record("two-host", "a", 0.8), record("two-host", "b", 0.7)]
        data = figure_data(records, instances_frame([entry]), "min-yield-vs-slack")
        assert set(data["algorithm"]) == {"a", "b", "relaxed-bound"}
        bound = data[data["algorithm"] == "relaxed-bound"]["value"].iloc[0]
        assert bound == 1.0

    def test_runtime_figure(self, entry):
        """Runtimes are grouped by task count."""
        records = [record("two-host", "a", 0.8, runtime=0.5)]
        data = figure_data(records, instances_frame([entry]), "runtime-vs-tasks")
        assert list(data["tasks"]) == [3]
        assert list(data["value"]) == [0.5]

    def test_unknown_figure(self, entry):
        """Only known figures are produced."""
        with pytest.raises(ValueError):
            figure_data([], instances_frame([entry]), "pie-chart")

    def test_frames_are_pandas(self, entry):
        """Instance facts come back as a DataFrame."""
        frame = instances_frame([entry])
        assert isinstance(frame, pd.DataFrame)
        assert frame.iloc[0]["tasks"] == 3
