#!/usr/bin/env python3
"""Run the desk-scale Ising cells (pass --grid for the full 36-cell sweep)."""

import sys
from pathlib import Path

from occlusion.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run(grid: bool) -> int:
    names = ["ising_grid"] if grid else ["ising_high_temp", "ising_low_temp"]
    for name in names:
        code = main(
            [
                "ising",
                "--config",
                str(ROOT / "configs" / f"{name}.yaml"),
                "--out",
                str(ROOT / "out" / name),
            ]
        )
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run("--grid" in sys.argv[1:]))
