import time
from typing import List, Optional

import typer

from config.settings import settings
from models.bpi import ImprovementMode
from models.cli import BenchReport, RunConfig
from repository.parser.pomdp_parser_repo import pomdp_parser_repo
from services.bench_service import bench_service
from services.report_service import report_service
from utility.errors import InputError
from utility.logging_config import configure_logging
from utility.response import ExitCode, bench_table, command_errors, console

router = typer.Typer()

ENV = settings.model_config.get("env_prefix", "SPARSE_BPI_")


def parse_ladder(text: str) -> List[int]:
    try:
        sizes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InputError(f"--ladder expects comma-separated node counts, got {text!r}")
    if not sizes:
        raise InputError("--ladder is empty")
    return sizes


@router.command("bench-compare")
def bench_compare(
    problem: str = typer.Argument(..., help="POMDP file in the standard text format, or random:S,A,Z[,discount]"),
    ladder: str = typer.Option("50,100,150", "--ladder", envvar=f"{ENV}LADDER",
                               help="Controller sizes to grow to and time, comma separated"),
    bench_sweeps: int = typer.Option(settings.DEFAULT_BENCH_SWEEPS, "--bench-sweeps", envvar=f"{ENV}BENCH_SWEEPS"),
    bench_nodes: Optional[int] = typer.Option(None, "--bench-nodes", envvar=f"{ENV}BENCH_NODES",
                                              help="Time at most this many evenly spaced nodes per sweep"),
    add_k: int = typer.Option(settings.DEFAULT_ADD_K, "--add-k", envvar=f"{ENV}ADD_K"),
    max_outer_iterations: int = typer.Option(settings.DEFAULT_MAX_OUTER_ITERATIONS, "--max-outer-iterations",
                                             envvar=f"{ENV}MAX_OUTER_ITERATIONS"),
    max_sweeps: int = typer.Option(settings.DEFAULT_MAX_SWEEPS, "--max-sweeps", envvar=f"{ENV}MAX_SWEEPS"),
    report: str = typer.Option("bench.json", "--report", envvar=f"{ENV}REPORT"),
    seed: int = typer.Option(0, "--seed", envvar=f"{ENV}SEED", help="Generator seed for a random: problem"),
    cpu_time: bool = typer.Option(False, "--cpu-time", envvar=f"{ENV}CPU_TIME"),
    log_level: Optional[str] = typer.Option(None, "--log-level", envvar=f"{ENV}LOG_LEVEL"),
):
    """Grow a controller through a size ladder and time full vs sparse node improvement at each size."""
    configure_logging(log_level)
    with command_errors():
        started = time.perf_counter()
        sizes = parse_ladder(ladder)
        config = RunConfig(
            problem_path=problem,
            mode=ImprovementMode.SPARSE,
            add_k=add_k,
            max_nodes=max(sizes),
            max_outer_iterations=max_outer_iterations,
            max_sweeps=max_sweeps,
            report_path=report,
            seed=seed,
            cpu_time=cpu_time,
        )
        pomdp = pomdp_parser_repo.load_problem(config.problem_path, config.seed)
        rows = bench_service.bench_compare(pomdp, config.to_bpi_settings(), sizes, bench_sweeps, bench_nodes)
        bench_report = BenchReport(
            schema_version=settings.REPORT_SCHEMA_VERSION,
            problem=report_service.problem_summary(pomdp),
            config=config,
            ladder=sorted(sizes),
            bench_sweeps=bench_sweeps,
            rows=rows,
            wall_clock_seconds=time.perf_counter() - started,
        )
        report_service.write_bench_report(bench_report, config.report_path)
        console.print(bench_table(rows))
        raise typer.Exit(code=ExitCode.CONVERGED)
