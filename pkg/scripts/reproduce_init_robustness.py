#!/usr/bin/env python3
"""Initialization study: the primed start versus 100 uniform-random starts.

Each start runs the same bounded joint optimization on the motorcycle data;
the comparison metric is the final joint likelihood.
"""
import json
import pathlib
import sys

from repgp.cli import main

OUT = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path("results/init")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    rc = main([
        "--command", "bench-init",
        "--restarts", "100",
        "--seed", "606",
        "--out", str(OUT),
    ])
    if rc == 0:
        result = json.loads((OUT / "manifest.json").read_text())["result"]
        print(f"default joint nll {result['default_joint_nll']:.2f}; "
              f"beats {result['default_beats']}/{result['random_runs']} random starts")
    sys.exit(rc)
