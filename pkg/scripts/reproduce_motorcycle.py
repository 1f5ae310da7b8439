#!/usr/bin/env python3
"""Motorcycle benchmark: 300 random 90/10 splits, Gaussian kernel.

Writes per-split and aggregate NMSE/NLPD/score tables plus a manifest.
"""
import json
import pathlib
import sys

from repgp.cli import main

OUT = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path("results/motorcycle")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    rc = main([
        "--command", "bench-motorcycle",
        "--splits", "300",
        "--kernel", "sqexp",
        "--seed", "404",
        "--out", str(OUT),
    ])
    if rc == 0:
        result = json.loads((OUT / "manifest.json").read_text())["result"]
        for model, stats in result["aggregate"].items():
            print(f"{model}: NLPD {stats['nlpd']:.3f}  NMSE {stats['nmse']:.3f}")
    sys.exit(rc)
