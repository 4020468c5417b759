from typing import Optional

import typer

from config.settings import settings
from repository.parser.pomdp_parser_repo import pomdp_parser_repo
from services.report_service import report_service
from services.simulation_service import simulation_service
from utility.logging_config import configure_logging
from utility.response import ExitCode, command_errors, console, eval_table

router = typer.Typer()

ENV = settings.model_config.get("env_prefix", "SPARSE_BPI_")


@router.command("eval")
def evaluate_policy(
    problem: str = typer.Argument(..., help="POMDP file in the standard text format"),
    policy: str = typer.Argument(..., help="Policy JSON written by solve --save-policy"),
    rollouts: int = typer.Option(settings.DEFAULT_ROLLOUTS, "--rollouts", envvar=f"{ENV}ROLLOUTS"),
    horizon: Optional[int] = typer.Option(None, "--horizon", envvar=f"{ENV}HORIZON",
                                          help="Rollout length; defaults to the shortest with bias below 1e-6"),
    seed: int = typer.Option(0, "--seed", envvar=f"{ENV}SEED"),
    report: Optional[str] = typer.Option(None, "--report", envvar=f"{ENV}EVAL_REPORT"),
    log_level: Optional[str] = typer.Option(None, "--log-level", envvar=f"{ENV}LOG_LEVEL"),
):
    """Print the exact value of a saved policy and a Monte Carlo estimate of it."""
    configure_logging(log_level)
    with command_errors():
        pomdp = pomdp_parser_repo.load_pomdp(problem)
        controller = report_service.load_policy(policy, pomdp)
        result = simulation_service.evaluate_policy(controller, pomdp, rollouts=rollouts, horizon=horizon, seed=seed)
        if report:
            report_service.write_eval_report(result, report)
        console.print(eval_table(result))
        raise typer.Exit(code=ExitCode.CONVERGED)
