#!/usr/bin/env python3
"""Rebuild the report bundle (CSV tables + hypothesis verdicts) from an
existing data root without re-running any pipeline stages."""

import argparse
from pathlib import Path

from wuglab.pipeline import data_root, desk_matrix, emit_reports, full_matrix


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", type=Path, default=None)
    ap.add_argument("--full", action="store_true",
                    help="report over the full matrix instead of the desk subset")
    args = ap.parse_args()
    specs = full_matrix() if args.full else desk_matrix()
    bundle = emit_reports(data_root(args.root), specs)
    print(f"report bundle: {bundle}")


if __name__ == "__main__":
    main()
