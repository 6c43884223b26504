#!/usr/bin/env python3
"""Static vs adaptive masks under identical injection budgets.

Runs the BIB pipeline twice on the shape corpus (one run per mask kind) and
prints a side-by-side table of success rate, accuracy loss, and stealth.
"""

import argparse
import dataclasses
from pathlib import Path

from bdnet.config import load_config
from bdnet.experiment import run_experiment
from bdnet.metrics import averaged_row

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "demo_bib.cfg"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--out", default="runs/compare_masks")
    args = ap.parse_args()

    cfg = load_config(args.config)
    rows = {}
    for kind in ("static", "adaptive"):
        sub = dataclasses.replace(cfg, mask_kind=kind, out=f"{args.out}/{kind}")
        reports = run_experiment(sub)
        rows[kind] = averaged_row(reports)

    print(f"\n{'kind':<10}{'success %':>12}{'acc loss pp':>14}{'phash sim %':>14}")
    for kind, row in rows.items():
        print(f"{kind:<10}{row['success_rate']:>12}{row['accuracy_loss']:>14}"
              f"{row['phash_sim']:>14}")


if __name__ == "__main__":
    main()
