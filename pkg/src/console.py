"""Create a rich console, and route the logging module through rich."""

# Global imports
import logging

# 3rd party imports
from rich.console import Console
from rich.logging import RichHandler

console = Console()
err_console = Console(stderr=True)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def setup_logging(verbose: bool = False) -> None:
    """Send log records to stderr through a RichHandler.

    :param verbose: Log at DEBUG level instead of WARNING
    """

    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=verbose)],
        force=True,
    )
