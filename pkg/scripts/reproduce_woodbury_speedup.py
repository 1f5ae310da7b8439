#!/usr/bin/env python3
"""Unique-n versus forced full-N timing study on the two-bumps surface.

A 100-site space-filling design in 2-d carries 1 to 50 replicates per site
(about 2500 raw observations). Both paths maximize the same likelihood;
the full-N path simply refuses to collapse replicates.
"""
import json
import pathlib
import sys

from repgp.cli import main

OUT = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path("results/woodbury")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    rc = main(["--command", "bench-woodbury", "--seed", "1", "--out", str(OUT)])
    if rc == 0:
        result = json.loads((OUT / "manifest.json").read_text())["result"]
        print(f"N={result['N']} n={result['n']} speedup={result['speedup']:.0f}x")
        print(f"lengthscales unique-n: {result['theta_unique']}")
        print(f"lengthscales full-N:   {result['theta_full']}")
    sys.exit(rc)
