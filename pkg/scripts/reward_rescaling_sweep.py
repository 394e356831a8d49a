"""Profiles x reward environments on grid pacman, then print the final-return matrix.

Thin wrapper around ``splitq sweep``; pass ``--out`` to keep the results elsewhere.
"""

import sys
from pathlib import Path

from splitq.harness.cli import main

if __name__ == "__main__":
    config = Path(__file__).resolve().parent.parent / "configs" / "sweep_pacman.json"
    sys.exit(main(["sweep", "--config", str(config), *sys.argv[1:]]))
