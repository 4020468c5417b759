from pathlib import Path
from typing import Optional

import typer

from config.settings import settings
from repository.parser.pomdp_parser_repo import pomdp_parser_repo
from utility.errors import InputError
from utility.logging_config import configure_logging
from utility.response import ExitCode, command_errors, print_success

router = typer.Typer()

ENV = settings.model_config.get("env_prefix", "SPARSE_BPI_")


@router.command("gen")
def generate(
    output: str = typer.Argument(..., help="Where to write the generated POMDP file"),
    states: int = typer.Option(4, "--states", min=1),
    actions: int = typer.Option(3, "--actions", min=1),
    observations: int = typer.Option(3, "--observations", min=1),
    discount: float = typer.Option(0.95, "--discount"),
    seed: int = typer.Option(0, "--seed", envvar=f"{ENV}SEED"),
    log_level: Optional[str] = typer.Option(None, "--log-level", envvar=f"{ENV}LOG_LEVEL"),
):
    """Write a random POMDP (Dirichlet rows, rewards uniform in [-1, 1]) in the standard text format."""
    configure_logging(log_level)
    with command_errors():
        pomdp = pomdp_parser_repo.generate_random_pomdp(states, actions, observations, discount, seed)
        try:
            Path(output).parent.mkdir(parents=True, exist_ok=True)
            Path(output).write_text(pomdp_parser_repo.serialize_pomdp(pomdp), encoding="utf-8")
        except OSError as e:
            raise InputError(f"cannot write {output}: {e}")
        print_success(f"Wrote {output} (|S|={states}, |A|={actions}, |Z|={observations}, seed {seed})")
        raise typer.Exit(code=ExitCode.CONVERGED)
