# minar-cli/minar_cli/__main__.py
import sys

import typer

from minar_cli.cli import app

# typer exports BadParameter but not its UsageError base, which also covers unknown options
UsageError = next(cls for cls in typer.BadParameter.__mro__ if cls.__name__ == "UsageError")


def main() -> None:
    """Entry point: 0 success, 1 usage, 2 data or format, 3 numerical failure"""
    try:
        code = app(standalone_mode=False)
    except UsageError as e:
        e.show()
        sys.exit(1)
    except typer.Abort:
        sys.exit(130)
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
