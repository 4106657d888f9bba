#!/usr/bin/env python3
"""
Launcher for the ACE design optimizer

Checks that the bundled reference data is present, then hands the command
line to ace.cli:
- optimize / evaluate / efficiency
- sweep / lhs / emulate
"""

import logging
import sys
from pathlib import Path

# Add the project root to the Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from ace.cli import main as cli_main

logger = logging.getLogger(__name__)


def check_requirements():
    """Warn when bundled configs or reference data are missing"""
    data_dir = project_root / "data"
    missing = [p for p in ("configs", "beetle_posterior.csv") if not (data_dir / p).exists()]
    if missing:
        logger.warning(f"⚠️  Missing bundled data under {data_dir}: {missing}")
        return False
    return True


def main():
    check_requirements()
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
