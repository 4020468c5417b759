import logging
from contextlib import contextmanager
from enum import IntEnum
from typing import Iterator, List, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from models.bpi import IterationRecord
from models.cli import BenchRow, EvalReport
from utility.errors import PomdpParseError, SparseBpiError

logger = logging.getLogger(__name__)

console = Console()
error_console = Console(stderr=True)


class ExitCode(IntEnum):
    """Process exit codes of the command-line tools"""
    CONVERGED = 0
    ERROR = 1
    TRUNCATED = 2


def print_error(error: SparseBpiError) -> None:
    """
    Print an error and, for parse failures, every diagnostic

    Args:
        error: The library error being reported
    """
    error_console.print(f"[bold red]error:[/bold red] {error.detail}", markup=True, highlight=False)
    if isinstance(error, PomdpParseError):
        for diagnostic in error.diagnostics:
            error_console.print(f"  line {diagnostic.line}: {diagnostic.severity.value}: {diagnostic.message}",
                                markup=False, highlight=False)


def print_success(message: str) -> None:
    console.print(f"[green]{message}[/green]", markup=True, highlight=False)


@contextmanager
def command_errors() -> Iterator[None]:
    """Turn library errors into printed messages and the matching exit code."""
    try:
        yield
    except typer.Exit:
        raise
    except SparseBpiError as e:
        print_error(e)
        raise typer.Exit(code=e.exit_code)
    except ValidationError as e:
        error_console.print(f"[bold red]error:[/bold red] invalid configuration: {e}", markup=True, highlight=False)
        raise typer.Exit(code=ExitCode.ERROR)
    except Exception:
        logger.exception("Unexpected failure")
        raise typer.Exit(code=ExitCode.ERROR)


def iteration_table(records: List[IterationRecord], title: Optional[str] = None) -> Table:
    """
    Summary table with one row per outer iteration

    Args:
        records: Iteration records of a run
        title: Optional table title

    Returns:
        A rich Table ready for printing
    """
    table = Table(title=title)
    for column in ("iter", "nodes", "V(b0)", "sweeps", "avg nnz", "max nnz", "ms/node", "LPs", "added"):
        table.add_column(column, justify="right")
    for record in records:
        table.add_row(
            str(record.iteration),
            str(record.num_nodes),
            f"{record.value_at_b0:.6f}",
            str(record.sweeps) + ("*" if record.sweep_cap_hit else ""),
            str(record.sparsity.avg_nonzero),
            str(record.sparsity.max_nonzero),
            f"{record.per_node_improve_ms.avg:.2f}",
            str(record.num_reduced_lps_solved),
            str(record.nodes_added),
        )
    return table


def bench_table(rows: List[BenchRow]) -> Table:
    table = Table(title="Per-node improvement time, full vs sparse")
    for column in ("|N|", "total params", "avg nnz", "full ms", "sparse ms", "full vars",
                   "sparse vars (median)", "LPs/node", "max |eps diff|"):
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(
            str(row.num_nodes),
            f"{row.sparsity.total_params_per_node:,}",
            str(row.sparsity.avg_nonzero),
            f"{row.full_ms.avg:.2f}",
            f"{row.sparse_ms.avg:.2f}",
            f"{row.full_lp_variables:,}",
            f"{row.sparse_lp_variables_median:g}",
            f"{row.sparse_lps_per_node_avg:.2f}",
            f"{row.max_epsilon_mismatch:.1e}",
        )
    return table


def eval_table(report: EvalReport) -> Table:
    table = Table(title="Policy value at the initial belief", show_header=False)
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_row("exact V(b0)", f"{report.exact_value:.6f}")
    table.add_row("start node", str(report.start_node))
    table.add_row("Monte Carlo estimate", f"{report.mc_estimate:.6f}")
    table.add_row("standard error", f"{report.mc_std_error:.6f}")
    table.add_row("truncation bias bound", f"{report.truncation_bias_bound:.2e}")
    table.add_row("rollouts x horizon", f"{report.rollouts} x {report.horizon}")
    return table
