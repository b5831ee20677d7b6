import sys

from app.cli import cli_dispatch


def run_app() -> None:
    """Console entry point: dispatch ``sys.argv`` and exit with its code."""
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    run_app()
