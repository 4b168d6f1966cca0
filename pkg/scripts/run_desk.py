#!/usr/bin/env python3
"""Run the desk-scale matrix (tiny models, 3 conditions, 2 seeds) end to end.

Artifacts land under the data root (default .wuglab_cache, override with
WUGLAB_DATA_DIR or --root); a report bundle is emitted at the end. Stages
that already completed with matching input hashes are skipped, so the
script is safe to re-run after an interruption.
"""

import argparse
from pathlib import Path

from wuglab.pipeline import data_root, desk_matrix, emit_reports, run_matrix


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", type=Path, default=None)
    ap.add_argument("--batch-size", type=int, default=8)
    args = ap.parse_args()
    root = data_root(args.root)
    specs = desk_matrix()
    run_matrix(specs, root, batch_size=args.batch_size)
    bundle = emit_reports(root, specs)
    print(f"report bundle: {bundle}")


if __name__ == "__main__":
    main()
