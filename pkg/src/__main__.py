"""Command-line interface."""

# local imports
from cli import main


if __name__ == "__main__":
    main(prog_name="pspdg")  # pragma: no cover
