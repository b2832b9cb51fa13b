#!/usr/bin/env python3
"""
vcsched: max-min fair placement of virtual clusters on identical hosts.

Commands:
- generate: synthetic instances (small/large/parallel grids or a custom spec)
- solve: run one algorithm on one instance, optionally under a migration budget
- bench: run algorithm suites over a workload and write result CSVs
- report: degradation-from-best tables and plot-data CSVs from bench results
"""

import sys
import math
import argparse
import logging
from pathlib import Path
from typing import List, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from vcsched.adaptation import (
    AdaptationInstance,
    BudgetMode,
    budget_from_bytes,
    exact_adapt_solve,
)
from vcsched.algorithms import EXACT, SOLVE_CHOICES, parse_algorithms, run_algorithm
from vcsched.bench import (
    FIGURES,
    SuiteOptions,
    SuiteRunner,
    degradation,
    figure_data,
    read_results,
    suite_metadata,
    summarize_by_slack,
    write_results,
)
from vcsched.bounds import ExactLimits
from vcsched.config import load_settings
from vcsched.errors import TooLargeForExactError
from vcsched.model import (
    Allocation,
    ProblemInstance,
    SolverOutcome,
    read_json,
    write_json,
)
from vcsched.phase2 import Phase2Mode
from vcsched.workload import ExperimentSpec, grids, load_workload, write_workload

# Configure rich console
console = Console()

# Set up logging with rich
logging.basicConfig(
    level=logging.INFO,
    format="%(message)s",
    datefmt="[%X]",
    handlers=[RichHandler(rich_tracebacks=True, console=console)],
)
logger = logging.getLogger("vcsched")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SOLVE_FAILED = 2

PHASE2_CHOICES = [mode.value for mode in Phase2Mode]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Place virtual clusters on identical hosts, maximising the minimum yield",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--verbose", "-v", action="store_true", help="Enable verbose logging"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("generate", help="Generate synthetic instances")
    gen.add_argument(
        "--set",
        choices=["small", "large", "parallel"],
        help="Experiment grid to generate (omit for a custom spec)",
    )
    gen.add_argument("--per-spec", type=int, default=1, help="Instances per spec")
    gen.add_argument("--seed", type=int, default=None, help="Random seed")
    gen.add_argument("--hosts", type=int, help="Custom spec: number of hosts")
    gen.add_argument("--jobs", type=int, help="Custom spec: number of jobs")
    gen.add_argument("--cpu", type=float, default=0.5, help="Custom spec: mean CPU need")
    gen.add_argument(
        "--mem",
        type=float,
        default=None,
        help="Custom spec: mean memory need (default: derived from --slack)",
    )
    gen.add_argument("--slack", type=float, default=0.5, help="Custom spec: memory slack")
    gen.add_argument("--cpu-cov", type=float, default=0.0, help="Custom spec: CPU CoV")
    gen.add_argument("--mem-cov", type=float, default=0.0, help="Custom spec: memory CoV")
    gen.add_argument(
        "--parallel", action="store_true", help="Custom spec: draw task counts per job"
    )
    gen.add_argument("--out", "-o", required=True, help="Output directory")

    solve = commands.add_parser("solve", help="Solve one instance")
    solve.add_argument("instance", help="Instance (or adaptation) JSON file")
    solve.add_argument("--alg", choices=SOLVE_CHOICES, default="mcb8", help="Algorithm")
    solve.add_argument(
        "--phase2",
        choices=PHASE2_CHOICES,
        default=None,
        help="Average-yield phase (default: per-job for parallel jobs, else per-task)",
    )
    solve.add_argument("--seed", type=int, default=None, help="Seed for randomized rounding")
    solve.add_argument(
        "--previous", help="Allocation JSON with the current placement (enables adaptation)"
    )
    solve.add_argument("--budget", type=float, default=None, help="Migration budget")
    solve.add_argument(
        "--budget-unit",
        choices=["fraction", "bytes", "count"],
        default="fraction",
        help="Unit of --budget",
    )
    solve.add_argument(
        "--host-mem-bytes", type=int, default=None, help="Host memory size for bytes budgets"
    )
    solve.add_argument(
        "--exact-budget", type=int, default=None, help="Node budget of the exact search"
    )
    solve.add_argument("--out", "-o", help="Write the outcome and allocation as JSON")

    bench = commands.add_parser("bench", help="Run an algorithm suite over a workload")
    bench.add_argument("instances", help="Workload directory or instance file")
    bench.add_argument("--algs", default="all", help="Comma-separated algorithms or groups")
    bench.add_argument("--jobs", "-j", type=int, default=None, help="Worker threads")
    bench.add_argument("--repetitions", type=int, default=None, help="Timed runs per cell")
    bench.add_argument("--seed", type=int, default=None, help="Base seed for solver seeds")
    bench.add_argument("--phase2", choices=PHASE2_CHOICES, default=None)
    bench.add_argument(
        "--reference",
        choices=["auto", "on", "off"],
        default="auto",
        help="Attach the exact optimum for instances small enough to enumerate",
    )
    bench.add_argument("--exact-budget", type=int, default=None)
    bench.add_argument(
        "--retries", type=int, default=1, help="Rounding passes per randomized cell"
    )
    bench.add_argument("--out", "-o", required=True, help="Results directory")

    report = commands.add_parser("report", help="Tables and plot data from results")
    report.add_argument("results", help="Results directory written by bench")
    report.add_argument(
        "--figure", choices=[*FIGURES, "all"], default="all", help="Plot data to write"
    )
    report.add_argument("--out", "-o", help="Output directory (default: results directory)")
    return parser


def _exact_limits(value: Optional[int], default: int) -> ExactLimits:
    return ExactLimits(node_budget=value if value is not None else default)


def cmd_generate(args, settings) -> int:
    seed = args.seed if args.seed is not None else settings.seed
    if args.set:
        specs = grids(seed)[args.set]
    else:
        specs = [
            ExperimentSpec(
                host_count=args.hosts,
                job_count=args.jobs,
                slack=args.slack,
                cpu_cov=args.cpu_cov,
                mem_cov=args.mem_cov,
                cpu_mean=args.cpu,
                parallel=args.parallel,
                rng_seed=seed,
                mem_mean=args.mem,
            )
        ]
    console.print(
        f"Generating {len(specs) * args.per_spec} instances...", style="bold blue"
    )
    manifest = write_workload(specs, args.out, args.per_spec)
    console.print(f"[bold green]Done.[/] Manifest: [bold]{manifest}[/]")
    return EXIT_OK


def _load_adaptation(args, inst: ProblemInstance, raw: dict, settings):
    """Adaptation input from the instance file or from --previous/--budget."""
    if args.previous is None and args.budget is None and "previous" not in raw:
        return None
    if "previous" in raw and args.previous is None:
        adapt = AdaptationInstance.from_dict(raw)
        if args.budget is None:
            return adapt
        previous = adapt.previous
    else:
        if args.previous is None:
            raise ValueError("--budget needs --previous or an adaptation instance file")
        records = read_json(args.previous)
        if isinstance(records, dict):
            records = records.get("allocation", records.get("previous", []))
        previous = {
            (int(r["job"]), int(r.get("task", 0))): r.get("host") for r in records
        }

    budget = args.budget if args.budget is not None else 0.0
    mode = BudgetMode.FRACTION
    if args.budget_unit == "bytes":
        host_mem = args.host_mem_bytes or settings.host_mem_bytes
        budget = budget_from_bytes(budget, host_mem)
    elif args.budget_unit == "count":
        mode = BudgetMode.COUNT
    return AdaptationInstance(inst, previous, budget, mode)


def render_allocation(inst: ProblemInstance, alloc: Allocation) -> Table:
    table = Table(title="Allocation")
    table.add_column("Job", justify="right")
    table.add_column("Task", justify="right")
    table.add_column("Host", justify="right")
    table.add_column("CPU share", justify="right")
    table.add_column("Yield", justify="right")
    for rec in alloc.to_records():
        need = inst.jobs[rec["job"]].cpu_need
        y = rec["share"] / need if need > 0 else 1.0
        table.add_row(
            str(rec["job"]),
            str(rec["task"]),
            str(rec["host"]),
            f"{rec['share']:.6f}",
            f"{y:.6f}",
        )
    return table


def _outcome_json(outcome: SolverOutcome) -> dict:
    return {
        "algorithm": outcome.algorithm,
        "success": outcome.success,
        "min_yield": outcome.min_yield,
        "avg_task_yield": outcome.avg_task_yield,
        "avg_job_yield": outcome.avg_job_yield,
        "message": outcome.message,
        "allocation": outcome.allocation.to_records() if outcome.allocation else None,
    }


def cmd_solve(args, settings) -> int:
    raw = read_json(args.instance)
    inst = ProblemInstance.from_dict(raw)
    phase2 = Phase2Mode(args.phase2) if args.phase2 else None
    limits = _exact_limits(args.exact_budget, settings.exact_budget)
    seed = args.seed if args.seed is not None else settings.seed

    adapt = _load_adaptation(args, inst, raw, settings)
    if adapt is not None:
        if args.alg != EXACT:
            raise ValueError("adaptation instances can only be solved with --alg exact")
        outcome = exact_adapt_solve(adapt, limits, phase2)
    else:
        outcome = run_algorithm(args.alg, inst, phase2, seed, limits)

    if args.out:
        write_json(_outcome_json(outcome), args.out)
        logger.info(f"Outcome saved to {args.out}")

    if not outcome.success:
        console.print(f"[bold red]{outcome.algorithm} failed:[/] {outcome.message}")
        return EXIT_SOLVE_FAILED

    console.print(
        f"[bold green]{outcome.algorithm}[/] min yield [bold]{outcome.min_yield:.6f}[/]"
    )
    if outcome.allocation is not None:
        console.print(
            f"Average yield {outcome.avg_task_yield:.6f} per task, "
            f"{outcome.avg_job_yield:.6f} per job ({outcome.wall_time * 1000:.2f} ms)"
        )
        console.print(render_allocation(inst, outcome.allocation))
    if outcome.message:
        console.print(outcome.message, style="dim")
    return EXIT_OK


def render_degradation(table) -> Table:
    out = Table(title="Degradation from best (%)")
    out.add_column("Algorithm")
    out.add_column("Average", justify="right")
    out.add_column("Maximum", justify="right")
    out.add_column("Solved", justify="right")
    for row in table.frame.to_dict("records"):
        avg, peak = row["avg_degradation"], row["max_degradation"]
        out.add_row(
            row["algorithm"].upper(),
            "-" if math.isnan(avg) else f"{avg:.2f}",
            "-" if math.isnan(peak) else f"{peak:.2f}",
            f"{row['solved']}/{row['instances']}",
        )
    return out


def cmd_bench(args, settings) -> int:
    entries = load_workload(args.instances)
    options = SuiteOptions(
        algorithms=parse_algorithms(args.algs),
        phase2=Phase2Mode(args.phase2) if args.phase2 else None,
        repetitions=args.repetitions or settings.repetitions,
        workers=args.jobs or settings.workers,
        base_seed=args.seed if args.seed is not None else settings.seed,
        reference=args.reference,
        exact_limits=_exact_limits(args.exact_budget, settings.exact_budget),
        rounding_retries=args.retries,
    )
    console.print(
        f"Running {len(options.algorithms)} algorithms on {len(entries)} instances...",
        style="bold blue",
    )
    runner = SuiteRunner(options, console=console)
    records = runner.run(entries)
    write_results(records, args.out, entries, suite_metadata(options, runner.stats))

    console.print(f"\n[bold green]Bench complete![/] Results in [bold]{args.out}[/]")
    console.print(
        f"- Cells: {runner.stats['cells']}  Successes: {runner.stats['successes']}  "
        f"Failures: {runner.stats['failures']}  Infeasible: {runner.stats['infeasible']}  "
        f"Errors: {runner.stats['errors']}  Invalid: {runner.stats['invalid']}"
    )
    console.print(f"- Duration: {runner.stats['duration']:.2f} seconds")
    if len({r.algorithm for r in records} - {EXACT}) >= 2:
        console.print(render_degradation(degradation(records)))
    return EXIT_OK


def cmd_report(args, settings) -> int:
    results = read_results(args.results)
    out = Path(args.out or args.results)
    out.mkdir(parents=True, exist_ok=True)

    written: List[Path] = []
    if len({r.algorithm for r in results.records} - {EXACT}) >= 2:
        table = degradation(results.records)
        table.frame.to_csv(out / "degradation.csv", index=False)
        written.append(out / "degradation.csv")
        console.print(render_degradation(table))
    else:
        logger.warning("Degradation needs at least two heuristics; skipping the table")

    slack_of = dict(zip(results.instances["instance_id"], results.instances["slack"]))
    summarize_by_slack(results.records, slack_of).to_csv(
        out / "summary-by-slack.csv", index=False
    )
    written.append(out / "summary-by-slack.csv")

    figures = list(FIGURES) if args.figure == "all" else [args.figure]
    for figure in figures:
        path = out / f"{figure}.csv"
        figure_data(results.records, results.instances, figure).to_csv(path, index=False)
        written.append(path)

    for path in written:
        console.print(f"Wrote [bold]{path}[/]")
    return EXIT_OK


def validate_args(parser: argparse.ArgumentParser, args) -> None:
    """Reject flag combinations argparse cannot express (exits with status 2)."""
    if args.command == "generate":
        if not args.set and (args.hosts is None or args.jobs is None):
            parser.error("a custom spec needs --hosts and --jobs (or pick --set)")
        if args.per_spec < 1:
            parser.error("--per-spec must be >= 1")
    if args.command == "solve":
        adapting = args.previous is not None or args.budget is not None
        if adapting and args.alg != EXACT:
            parser.error("adaptation inputs are only supported with --alg exact")
        if args.budget is not None and args.budget < 0:
            parser.error("--budget must be >= 0")
        unit_flags = args.budget_unit != "fraction" or args.host_mem_bytes is not None
        if unit_flags and args.budget is None:
            parser.error("--budget-unit and --host-mem-bytes only apply to --budget")


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the script.

    Args:
        argv: Command-line arguments (default: sys.argv[1:])

    Returns:
        Exit code: 0 on success, 2 when a solver fails, 1 on errors, 130 on interrupt
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    validate_args(parser, args)

    # Set log level
    if args.verbose:
        logger.setLevel(logging.DEBUG)

    try:
        settings = load_settings()
        return COMMANDS[args.command](args, settings)
    except KeyboardInterrupt:
        console.print("\n[bold yellow]Cancelled by user.[/]")
        return 130
    except TooLargeForExactError as e:
        console.print(f"[bold red]Error:[/] {str(e)}")
        console.print("\nTry a smaller instance or raise --exact-budget.")
        return EXIT_ERROR
    except Exception as e:
        console.print(f"[bold red]Error:[/] {str(e)}")
        if args.verbose:
            console.print_exception()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
