"""Experiment harness: run algorithm suites over instance sets and aggregate results.

Every (instance, algorithm) cell yields exactly one ``ResultRecord``. Solver
failures, exceptions and invalid allocations are all recorded, counted and
logged; the suite never aborts on a single cell.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import io
import logging
import math
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn

from vcsched.algorithms import EXACT, RELAXED_BOUND, run_algorithm
from vcsched.bounds import ExactLimits, exact_solve, relaxed_optimum
from vcsched.errors import RelaxedInfeasibleError, TooLargeForExactError
from vcsched.model import RNG_ALGORITHM, PathLike, check_feasible, read_json, write_json
from vcsched.phase2 import Phase2Mode, default_mode
from vcsched.workload import WorkloadEntry

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
TIMINGS_FILE = "timings.csv"
INSTANCES_FILE = "instances.csv"
METADATA_FILE = "metadata.json"

RESULT_COLUMNS = [
    "spec_id",
    "instance_id",
    "algorithm",
    "outcome",
    "min_yield",
    "avg_task_yield",
    "avg_job_yield",
    "runtime_s",
    "relaxed_bound",
    "exact_opt",
]
_KEY_COLUMNS = ["spec_id", "instance_id", "algorithm"]
INSTANCE_COLUMNS = ["instance_id", "spec_id", "slack", "hosts", "jobs", "tasks"]

_COUNT_KEYS = ("cells", "successes", "failures", "infeasible", "errors", "invalid")

DEGRADATION_POLICY = (
    "percent below the best successful algorithm per instance; "
    "an algorithm's failed instances are left out of its own averages"
)


class Outcome(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class ResultRecord:
    spec_id: str
    instance_id: str
    algorithm: str
    outcome: Outcome
    min_yield: Optional[float] = None
    avg_task_yield: Optional[float] = None
    avg_job_yield: Optional[float] = None
    runtime_s: float = 0.0
    relaxed_bound: Optional[float] = None
    exact_opt: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        has_yields = self.min_yield is not None
        if has_yields != (self.outcome is Outcome.SUCCESS):
            raise ValueError(
                f"{self.instance_id}/{self.algorithm}: yields must be present iff successful"
            )
        if self.runtime_s < 0.0:
            raise ValueError("runtime_s must be >= 0")

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS


class ReferenceMode(str, Enum):
    AUTO = "auto"
    ON = "on"
    OFF = "off"


@dataclass(frozen=True)
class SuiteOptions:
    algorithms: Tuple[str, ...]
    phase2: Optional[Phase2Mode] = None
    repetitions: int = 3
    workers: int = 1
    base_seed: int = 1
    reference: ReferenceMode = ReferenceMode.AUTO
    exact_limits: ExactLimits = field(default_factory=ExactLimits)
    spot_check_rate: float = 0.1
    rounding_retries: int = 1

    def __post_init__(self):
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")
        if self.repetitions < 1 or self.workers < 1 or self.rounding_retries < 1:
            raise ValueError("repetitions, workers and rounding_retries must be >= 1")
        if not 0.0 <= self.spot_check_rate <= 1.0:
            raise ValueError("spot_check_rate must lie in [0, 1]")
        object.__setattr__(self, "reference", ReferenceMode(self.reference))
        if self.phase2 is not None:
            object.__setattr__(self, "phase2", Phase2Mode(self.phase2))


def _digest(*parts: Any) -> int:
    text = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def cell_seed(base_seed: int, instance_id: str) -> int:
    """Solver seed for an instance; independent of execution order."""
    return _digest(base_seed, instance_id) >> 1


def _spot_checked(instance_id: str, algorithm: str, rate: float) -> bool:
    return _digest("spot", instance_id, algorithm) / 2.0**64 < rate


def _exact_fits(entry: WorkloadEntry, limits: ExactLimits) -> bool:
    inst = entry.instance
    return inst.task_count * math.log(inst.host_count) <= math.log(limits.node_budget)


class SuiteRunner:
    """Fan (instance, algorithm) cells out to a worker pool and collect records."""

    def __init__(
        self,
        options: SuiteOptions,
        console: Optional[Console] = None,
        show_progress: bool = True,
    ):
        self.options = options
        self.console = console or Console()
        self.show_progress = show_progress
        self.stats = {
            "cells": 0,
            "successes": 0,
            "failures": 0,
            "infeasible": 0,
            "errors": 0,
            "invalid": 0,
            "start_time": time.time(),
            "duration": 0.0,
        }
        self._lock = threading.Lock()

    def _count(self, key: str) -> None:
        with self._lock:
            self.stats[key] += 1

    def _references(
        self, entry: WorkloadEntry
    ) -> Tuple[Optional[float], Optional[float], bool]:
        """(relaxed bound, exact optimum, instance known infeasible)."""
        try:
            bound = relaxed_optimum(entry.instance)
        except RelaxedInfeasibleError:
            return None, None, True

        mode = self.options.reference
        if mode is ReferenceMode.OFF:
            return bound, None, False
        if mode is ReferenceMode.AUTO and not _exact_fits(entry, self.options.exact_limits):
            return bound, None, False
        try:
            ref = exact_solve(entry.instance, self.options.exact_limits, Phase2Mode.OFF)
        except TooLargeForExactError as e:
            level = logging.WARNING if mode is ReferenceMode.ON else logging.DEBUG
            logger.log(level, f"No exact reference for {entry.instance_id}: {e}")
            return bound, None, False
        if not ref.success:
            return bound, None, True
        return bound, ref.min_yield, False

    def _validate(self, entry: WorkloadEntry, name: str, outcome) -> bool:
        if outcome.allocation is None:
            return True
        if not _spot_checked(entry.instance_id, name, self.options.spot_check_rate):
            return True
        mode = self.options.phase2 or default_mode(entry.instance)
        violations = check_feasible(
            entry.instance, outcome.allocation, uniform=mode is not Phase2Mode.PER_TASK
        )
        if violations:
            self._count("invalid")
            logger.warning(
                f"{name} on {entry.instance_id} returned an invalid allocation: "
                f"{violations[0]}"
            )
            return False
        return True

    def _run_cell(
        self,
        entry: WorkloadEntry,
        name: str,
        seed: int,
        refs: Tuple[Optional[float], Optional[float], bool],
    ) -> ResultRecord:
        bound, exact_opt, infeasible = refs
        base = dict(
            spec_id=entry.spec_id,
            instance_id=entry.instance_id,
            algorithm=name,
            relaxed_bound=bound,
            exact_opt=exact_opt,
        )
        self._count("cells")
        try:
            runtimes = []
            outcome = None
            for _ in range(self.options.repetitions):
                outcome = run_algorithm(
                    name,
                    entry.instance,
                    self.options.phase2,
                    seed,
                    self.options.exact_limits,
                    retries=self.options.rounding_retries,
                )
                runtimes.append(outcome.wall_time)
            runtime = statistics.median(runtimes)
        except Exception as e:
            self._count("errors")
            logger.warning(f"{name} on {entry.instance_id} failed: {e}")
            outcome_kind = Outcome.INFEASIBLE if infeasible else Outcome.FAILURE
            return ResultRecord(outcome=outcome_kind, **base)

        if outcome.success and self._validate(entry, name, outcome):
            self._count("successes")
            return ResultRecord(
                outcome=Outcome.SUCCESS,
                min_yield=outcome.min_yield,
                avg_task_yield=outcome.avg_task_yield,
                avg_job_yield=outcome.avg_job_yield,
                runtime_s=runtime,
                **base,
            )
        if infeasible:
            self._count("infeasible")
            return ResultRecord(outcome=Outcome.INFEASIBLE, runtime_s=runtime, **base)
        self._count("failures")
        return ResultRecord(outcome=Outcome.FAILURE, runtime_s=runtime, **base)

    def _run_instance(self, entry: WorkloadEntry) -> List[ResultRecord]:
        try:
            refs = self._references(entry)
        except Exception as e:
            self._count("errors")
            logger.warning(f"Reference solve failed on {entry.instance_id}: {e}")
            refs = (None, None, False)
        seed = cell_seed(self.options.base_seed, entry.instance_id)
        return [self._run_cell(entry, name, seed, refs) for name in self.options.algorithms]

    def run(self, entries: Sequence[WorkloadEntry]) -> List[ResultRecord]:
        results: Dict[int, List[ResultRecord]] = {}
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
            console=self.console,
            disable=not self.show_progress,
        ) as progress:
            task_id = progress.add_task("Running suite...", total=len(entries))
            with concurrent.futures.ThreadPoolExecutor(
                max_workers=self.options.workers
            ) as executor:
                futures = {
                    executor.submit(self._run_instance, entry): n
                    for n, entry in enumerate(entries)
                }
                for future in concurrent.futures.as_completed(futures):
                    n = futures[future]
                    results[n] = future.result()
                    progress.update(
                        task_id,
                        advance=1,
                        description=f"Solved {entries[n].instance_id}",
                    )

        self.stats["duration"] = time.time() - self.stats["start_time"]
        logger.info(
            f"Suite finished: {self.stats['cells']} cells, "
            f"{self.stats['successes']} successes, "
            f"{self.stats['failures']} failures, {self.stats['infeasible']} infeasible, "
            f"{self.stats['errors']} errors in {self.stats['duration']:.2f}s"
        )
        return [record for n in sorted(results) for record in results[n]]


def run_suite(
    entries: Sequence[WorkloadEntry],
    options: SuiteOptions,
    console: Optional[Console] = None,
    show_progress: bool = False,
) -> List[ResultRecord]:
    """Run every algorithm in ``options`` on every workload entry.

    Args:
        entries: Instances to run, in output order
        options: Algorithms, repetitions, workers, seeds and reference policy
        console: Console for the progress bar
        show_progress: Display a progress bar while running

    Returns:
        One record per (instance, algorithm), instance-major
    """
    return SuiteRunner(options, console, show_progress).run(entries)


def records_frame(records: Sequence[ResultRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        row = asdict(record)
        row["outcome"] = record.outcome.value
        rows.append(row)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def _optional(value: Any) -> Optional[float]:
    if value is None or pd.isna(value):
        return None
    return float(value)


def records_from_frame(frame: pd.DataFrame) -> List[ResultRecord]:
    records = []
    for row in frame.to_dict("records"):
        records.append(
            ResultRecord(
                spec_id=str(row["spec_id"]),
                instance_id=str(row["instance_id"]),
                algorithm=str(row["algorithm"]),
                outcome=Outcome(row["outcome"]),
                min_yield=_optional(row.get("min_yield")),
                avg_task_yield=_optional(row.get("avg_task_yield")),
                avg_job_yield=_optional(row.get("avg_job_yield")),
                runtime_s=_optional(row.get("runtime_s")) or 0.0,
                relaxed_bound=_optional(row.get("relaxed_bound")),
                exact_opt=_optional(row.get("exact_opt")),
            )
        )
    return records


def _read_csv(source) -> pd.DataFrame:
    return pd.read_csv(
        source,
        dtype={col: str for col in _KEY_COLUMNS + ["outcome"]},
        float_precision="round_trip",
    )


def emit_csv(records: Sequence[ResultRecord], include_runtime: bool = True) -> str:
    frame = records_frame(records)
    if not include_runtime:
        frame = frame.drop(columns=["runtime_s"])
    return frame.to_csv(index=False)


def parse_csv(text: str) -> List[ResultRecord]:
    return records_from_frame(_read_csv(io.StringIO(text)))


def instances_frame(entries: Sequence[WorkloadEntry]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "instance_id": e.instance_id,
                "spec_id": e.spec_id,
                "slack": e.slack,
                "hosts": e.instance.host_count,
                "jobs": e.instance.job_count,
                "tasks": e.instance.task_count,
            }
            for e in entries
        ],
        columns=INSTANCE_COLUMNS,
    )


def suite_metadata(options: SuiteOptions, stats: Mapping[str, Any]) -> Dict[str, Any]:
    """Run parameters and deterministic counts; wall-clock values are left out."""
    return {
        "rng": RNG_ALGORITHM,
        "seed_derivation": "sha256(base_seed:instance_id), 63 bits",
        "algorithms": list(options.algorithms),
        "phase2": options.phase2.value if options.phase2 else "default",
        "repetitions": options.repetitions,
        "runtime_statistic": "median",
        "base_seed": options.base_seed,
        "reference": options.reference.value,
        "exact_node_budget": options.exact_limits.node_budget,
        "spot_check_rate": options.spot_check_rate,
        "rounding_retries": options.rounding_retries,
        "degradation_policy": DEGRADATION_POLICY,
        "counts": {k: stats[k] for k in _COUNT_KEYS if k in stats},
    }


def write_results(
    records: Sequence[ResultRecord],
    out_dir: PathLike,
    entries: Sequence[WorkloadEntry] = (),
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Results without timings, timings alone, instance facts and metadata."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / RESULTS_FILE).write_text(emit_csv(records, include_runtime=False))
        records_frame(records)[_KEY_COLUMNS + ["runtime_s"]].to_csv(
            out / TIMINGS_FILE, index=False
        )
        if entries:
            instances_frame(entries).to_csv(out / INSTANCES_FILE, index=False)
    except Exception as e:
        logger.error(f"Failed to write results to {out}: {e}")
        raise
    if metadata is not None:
        write_json(dict(metadata), out / METADATA_FILE)
    logger.info(f"Wrote {len(records)} records to {out / RESULTS_FILE}")
    return out / RESULTS_FILE


@dataclass
class ResultSet:
    records: List[ResultRecord]
    instances: pd.DataFrame
    metadata: Dict[str, Any]


def read_results(path: PathLike) -> ResultSet:
    """Load a results directory (or a results CSV inside one)."""
    path = Path(path)
    out = path.parent if path.is_file() else path
    results_path = out / RESULTS_FILE
    if not results_path.is_file():
        raise FileNotFoundError(f"Results file not found: {results_path}")

    frame = _read_csv(results_path)
    timings_path = out / TIMINGS_FILE
    if timings_path.is_file():
        timings = _read_csv(timings_path)
        frame = frame.merge(timings, on=_KEY_COLUMNS, how="left")
    else:
        logger.warning(f"{timings_path} is missing; runtimes read as 0")
        frame["runtime_s"] = 0.0

    instances_path = out / INSTANCES_FILE
    if instances_path.is_file():
        instances = pd.read_csv(instances_path, dtype={"instance_id": str, "spec_id": str})
    else:
        instances = pd.DataFrame(columns=INSTANCE_COLUMNS)

    metadata_path = out / METADATA_FILE
    metadata = read_json(metadata_path) if metadata_path.is_file() else {}
    return ResultSet(records_from_frame(frame), instances, metadata)


@dataclass
class DegradationTable:
    """Per algorithm: average and maximum percent below the per-instance best."""

    frame: pd.DataFrame

    @property
    def algorithms(self) -> List[str]:
        return list(self.frame["algorithm"])

    def row(self, algorithm: str) -> Dict[str, Any]:
        match = self.frame[self.frame["algorithm"] == algorithm]
        if match.empty:
            raise KeyError(algorithm)
        return match.iloc[0].to_dict()


def degradation(
    records: Sequence[ResultRecord], exclude: Sequence[str] = (EXACT, RELAXED_BOUND)
) -> DegradationTable:
    """Degradation from best over instances where some algorithm succeeded.

    Algorithms failing on an instance are left out of that instance's
    comparison; ``exclude`` drops reference solvers from the ranking.
    """
    if not records:
        raise ValueError("degradation needs at least one record")
    frame = records_frame(records)
    frame = frame[~frame["algorithm"].isin(list(exclude))]
    algorithms = list(dict.fromkeys(frame["algorithm"]))
    if len(algorithms) < 2:
        raise ValueError("degradation needs records for at least two algorithms")

    solved = frame[frame["outcome"] == Outcome.SUCCESS.value].copy()
    solved["min_yield"] = solved["min_yield"].astype(float)
    best = solved.groupby("instance_id")["min_yield"].transform("max")
    solved["degradation"] = (
        100.0 * (best - solved["min_yield"]) / best.where(best > 0.0)
    ).fillna(0.0)

    grouped = solved.groupby("algorithm")["degradation"]
    table = pd.DataFrame({"algorithm": algorithms})
    table["avg_degradation"] = table["algorithm"].map(grouped.mean())
    table["max_degradation"] = table["algorithm"].map(grouped.max())
    table["solved"] = table["algorithm"].map(grouped.size()).fillna(0).astype(int)
    table["instances"] = table["algorithm"].map(frame.groupby("algorithm").size()).astype(int)
    return DegradationTable(table)


def summarize_by_slack(
    records: Sequence[ResultRecord], slack_of: Mapping[str, Optional[float]]
) -> pd.DataFrame:
    """Per (slack, algorithm): yield means over successes, failure rate, mean runtime."""
    frame = records_frame(records)
    frame["slack"] = frame["instance_id"].map(lambda i: slack_of.get(i))
    frame = frame.dropna(subset=["slack"])
    columns = [
        "slack",
        "algorithm",
        "min_yield",
        "avg_task_yield",
        "avg_job_yield",
        "failure_rate",
        "runtime_s",
        "count",
    ]
    if frame.empty:
        return pd.DataFrame(columns=columns)

    frame["failed"] = (frame["outcome"] != Outcome.SUCCESS.value).astype(float)
    for col in ("min_yield", "avg_task_yield", "avg_job_yield", "runtime_s"):
        frame[col] = frame[col].astype(float)
    grouped = frame.groupby(["slack", "algorithm"], sort=True)
    summary = grouped.agg(
        min_yield=("min_yield", "mean"),
        avg_task_yield=("avg_task_yield", "mean"),
        avg_job_yield=("avg_job_yield", "mean"),
        failure_rate=("failed", "mean"),
        runtime_s=("runtime_s", "mean"),
        count=("failed", "size"),
    ).reset_index()
    return summary[columns]


FIGURES: Dict[str, str] = {
    "min-yield-vs-slack": "min_yield",
    "avg-yield-vs-slack": "avg_task_yield",
    "avg-job-yield-vs-slack": "avg_job_yield",
    "failure-rate-vs-slack": "failure_rate",
    "runtime-vs-tasks": "runtime_s",
}


def _reference_series(
    records: Sequence[ResultRecord], slack_of: Mapping[str, Optional[float]]
) -> pd.DataFrame:
    """Mean relaxed bound and exact optimum per slack, one value per instance."""
    per_instance: Dict[str, ResultRecord] = {}
    for record in records:
        per_instance.setdefault(record.instance_id, record)
    rows = []
    for instance_id, record in per_instance.items():
        slack = slack_of.get(instance_id)
        if slack is None or pd.isna(slack):
            continue
        if record.relaxed_bound is not None:
            rows.append((slack, RELAXED_BOUND, record.relaxed_bound))
        if record.exact_opt is not None:
            rows.append((slack, EXACT, record.exact_opt))
    frame = pd.DataFrame(rows, columns=["slack", "algorithm", "value"])
    if frame.empty:
        return frame
    return frame.groupby(["slack", "algorithm"], sort=True)["value"].mean().reset_index()


def figure_data(
    records: Sequence[ResultRecord], instances: pd.DataFrame, figure: str
) -> pd.DataFrame:
    """Long-format plot data: (slack, algorithm, value), or (tasks, algorithm, value)."""
    if figure not in FIGURES:
        raise ValueError(f"Unknown figure: {figure}")

    if figure == "runtime-vs-tasks":
        tasks_of = dict(zip(instances["instance_id"], instances["tasks"]))
        frame = records_frame(records)
        frame["tasks"] = frame["instance_id"].map(tasks_of)
        frame = frame.dropna(subset=["tasks"])
        if frame.empty:
            return pd.DataFrame(columns=["tasks", "algorithm", "value"])
        frame["tasks"] = frame["tasks"].astype(int)
        frame["runtime_s"] = frame["runtime_s"].astype(float)
        data = frame.groupby(["tasks", "algorithm"], sort=True)["runtime_s"].mean()
        return data.reset_index().rename(columns={"runtime_s": "value"})

    slack_of = dict(zip(instances["instance_id"], instances["slack"]))
    summary = summarize_by_slack(records, slack_of)
    data = summary[["slack", "algorithm", FIGURES[figure]]].rename(
        columns={FIGURES[figure]: "value"}
    )
    if figure == "min-yield-vs-slack":
        refs = _reference_series(records, slack_of)
        refs = refs[~refs["algorithm"].isin(set(data["algorithm"]))]
        if not refs.empty:
            data = pd.concat([data, refs], ignore_index=True)
    return data.sort_values(["slack", "algorithm"], kind="stable").reset_index(drop=True)
