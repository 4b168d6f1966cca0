#!/usr/bin/env python3
"""Run the full pre-registered matrix: 8 conditions x 3 sizes x 5 seeds,
plus the 10 dose-response runs (25% / 50% corpus fractions).

This is compute-heavy (120 trainings); use run_desk.py for the quick
acceptance-scale subset. Completed stages are skipped on re-run.
"""

import argparse
from pathlib import Path

from wuglab.pipeline import data_root, emit_reports, full_matrix, run_matrix


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", type=Path, default=None)
    ap.add_argument("--batch-size", type=int, default=8)
    args = ap.parse_args()
    root = data_root(args.root)
    specs = full_matrix()
    run_matrix(specs, root, batch_size=args.batch_size)
    bundle = emit_reports(root, specs)
    print(f"report bundle: {bundle}")


if __name__ == "__main__":
    main()
