#!/usr/bin/env python3
"""Reproduce the interval, disk, square and L-shape tables into a directory.

Thin wrapper over `fracfem tables`; extra arguments are passed through, e.g.

    python scripts/run_tables.py --out results --tables 1 3 --budget-dofs 5000 -v
"""

import sys

from fracfem.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--out" not in argv:
        argv += ["--out", "results"]
    sys.exit(main(["tables", "--deterministic", *argv]))
