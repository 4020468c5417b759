import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

from config.settings import settings


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single rich handler on the root logger (idempotent)."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)

    handler = RichHandler(console=Console(stderr=True), rich_tracebacks=True, show_path=False, markup=False)
    handler.setFormatter(logging.Formatter(settings.LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel((level or settings.LOG_LEVEL).upper())
