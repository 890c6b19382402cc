#!/usr/bin/env python3
"""Run both desk-scale mixture experiments and the lag table for d=1.

Outputs land under out/gmm_d1 and out/gmm_d100 relative to the repo root.
"""

import sys
from pathlib import Path

from occlusion.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run() -> int:
    for name in ("gmm_d1", "gmm_d100"):
        code = main(
            [
                "gmm",
                "--config",
                str(ROOT / "configs" / f"{name}.yaml"),
                "--out",
                str(ROOT / "out" / name),
            ]
        )
        if code != 0:
            return code
    trace = ROOT / "out" / "gmm_d1" / "trace_gmm_d1_rep0.csv"
    return main(["acf", str(trace), "--max-lag", "100", "--out", str(ROOT / "out" / "gmm_d1")])


if __name__ == "__main__":
    sys.exit(run())
