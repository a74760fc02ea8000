#!/usr/bin/env python
"""Command-line utility for running annealing experiments."""
import sys


def main():
    """Run the experiments command line."""
    try:
        from experiments.commands import cli
    except ImportError as exc:
        raise ImportError(
            "Couldn't import the experiments app. Are numpy, scipy and click "
            "installed, and are you running from the project root? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    cli(prog_name="manage.py", args=sys.argv[1:])


if __name__ == '__main__':
    main()
