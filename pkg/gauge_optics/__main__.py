#!/usr/bin/env python3
"""
Executable entry point for GaugeOptics.
"""

import sys

from gauge_optics.cli import main as cli_main


def main() -> None:
    """Run the command line and exit with its status."""
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
