import typer

from config.settings import settings
from routers import bench_router, eval_router, gen_router, solve_router

app = typer.Typer(
    name=settings.APP_NAME,
    help=settings.APP_DESCRIPTION,
    no_args_is_help=True,
    add_completion=False,
)

# Include command groups
app.add_typer(solve_router)
app.add_typer(bench_router)
app.add_typer(eval_router)
app.add_typer(gen_router)


@app.command("version")
def version():
    """Print the application version."""
    typer.echo(f"{settings.APP_NAME} {settings.APP_VERSION}")


if __name__ == "__main__":
    app()
