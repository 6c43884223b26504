#!/usr/bin/env python3
"""Intensity and budget sweeps from the bundled configs.

`--axis intensity` re-trains the static-mask attack at several max intensity
changes; `--axis xi` measures the direct (no poisoning) success of the
adaptive mask across l-infinity budgets.
"""

import argparse
from pathlib import Path

from bdnet.config import load_config
from bdnet.experiment import run_sweep

CONFIGS = {
    "intensity": "sweep_intensity.cfg",
    "xi": "direct_xi_sweep.cfg",
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--axis", choices=sorted(CONFIGS), default="intensity")
    ap.add_argument("--config")
    args = ap.parse_args()

    path = args.config or (Path(__file__).resolve().parent.parent / "configs"
                           / CONFIGS[args.axis])
    cfg = load_config(path)
    run_sweep(cfg, args.axis)
    print(f"wrote {cfg.out}/sweep.csv")


if __name__ == "__main__":
    main()
