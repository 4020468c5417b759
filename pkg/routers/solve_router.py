import time
from typing import Optional

import typer

from config.settings import settings
from models.bpi import ImprovementMode
from models.cli import ControllerSummary, RunConfig, RunReport
from repository.controller.controller_repo import controller_repo
from repository.evaluation.evaluation_repo import evaluation_repo
from repository.parser.pomdp_parser_repo import pomdp_parser_repo
from services.bpi_service import bpi_service
from services.report_service import report_service
from utility.logging_config import configure_logging
from utility.response import ExitCode, command_errors, console, iteration_table

router = typer.Typer()

ENV = settings.model_config.get("env_prefix", "SPARSE_BPI_")


@router.command("solve")
def solve(
    problem: str = typer.Argument(..., help="POMDP file in the standard text format, or random:S,A,Z[,discount]"),
    mode: ImprovementMode = typer.Option(ImprovementMode.SPARSE, "--mode", envvar=f"{ENV}MODE"),
    gap_tolerance: float = typer.Option(0.0, "--gap-tolerance", envvar=f"{ENV}GAP_TOLERANCE",
                                        help="Early-termination gap for sparse-early"),
    add_k: int = typer.Option(settings.DEFAULT_ADD_K, "--add-k", envvar=f"{ENV}ADD_K"),
    max_nodes: int = typer.Option(settings.DEFAULT_MAX_NODES, "--max-nodes", envvar=f"{ENV}MAX_NODES"),
    max_outer_iterations: int = typer.Option(settings.DEFAULT_MAX_OUTER_ITERATIONS, "--max-outer-iterations",
                                             envvar=f"{ENV}MAX_OUTER_ITERATIONS"),
    max_sweeps: int = typer.Option(settings.DEFAULT_MAX_SWEEPS, "--max-sweeps", envvar=f"{ENV}MAX_SWEEPS"),
    epsilon_tolerance: float = typer.Option(settings.EPSILON_TOLERANCE, "--epsilon-tolerance",
                                            envvar=f"{ENV}EPSILON_TOLERANCE"),
    report: str = typer.Option("report.json", "--report", envvar=f"{ENV}REPORT"),
    save_policy: Optional[str] = typer.Option(None, "--save-policy", envvar=f"{ENV}SAVE_POLICY"),
    seed: int = typer.Option(0, "--seed", envvar=f"{ENV}SEED", help="Generator seed for a random: problem"),
    frozen_sweep: bool = typer.Option(False, "--frozen-sweep", envvar=f"{ENV}FROZEN_SWEEP",
                                      help="Improve all nodes concurrently against a frozen value function"),
    cpu_time: bool = typer.Option(False, "--cpu-time", envvar=f"{ENV}CPU_TIME"),
    log_level: Optional[str] = typer.Option(None, "--log-level", envvar=f"{ENV}LOG_LEVEL"),
):
    """Run bounded policy iteration on a POMDP file and write a JSON report."""
    configure_logging(log_level)
    with command_errors():
        started = time.perf_counter()
        config = RunConfig(
            problem_path=problem,
            mode=mode,
            gap_tolerance=gap_tolerance,
            add_k=add_k,
            max_nodes=max_nodes,
            max_outer_iterations=max_outer_iterations,
            max_sweeps=max_sweeps,
            epsilon_tolerance=epsilon_tolerance,
            report_path=report,
            save_policy_path=save_policy,
            seed=seed,
            frozen_sweep=frozen_sweep,
            cpu_time=cpu_time,
        )
        pomdp = pomdp_parser_repo.load_problem(config.problem_path, config.seed)
        controller, v, trace = bpi_service.run_bpi(pomdp, config.to_bpi_settings())

        value_at_b0, start = evaluation_repo.belief_value(v, pomdp.initial_belief)
        summary = ControllerSummary(
            num_nodes=controller.size,
            value_at_b0=value_at_b0,
            start_node=start,
            sparsity=controller_repo.sparsity_stats(controller, pomdp),
            deterministic_nodes=sum(1 for node in controller.nodes if node.is_deterministic),
        )
        run_report = RunReport(
            schema_version=settings.REPORT_SCHEMA_VERSION,
            problem=report_service.problem_summary(pomdp),
            config=config,
            records=trace.records,
            final_controller=summary,
            converged=trace.converged,
            truncated=trace.truncated,
            truncation_reason=trace.truncation_reason,
            wall_clock_seconds=time.perf_counter() - started,
        )
        report_service.write_run_report(run_report, config.report_path)
        if config.save_policy_path:
            report_service.save_policy(controller, pomdp, config.save_policy_path)

        console.print(iteration_table(trace.records, title=f"{problem} ({config.mode.value})"))
        console.print(f"V(b0) = {value_at_b0:.6f} with {controller.size} nodes (start node {start})", highlight=False)
        if trace.truncated:
            console.print(f"Truncated: {trace.truncation_reason}", highlight=False)
            raise typer.Exit(code=ExitCode.TRUNCATED)
        raise typer.Exit(code=ExitCode.CONVERGED)
