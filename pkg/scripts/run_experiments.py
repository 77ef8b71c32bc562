#!/usr/bin/env python3
"""Run every shipped config through the CLI, one output directory each.

    python3 scripts/run_experiments.py [--out runs] [--only cauchy rayleigh]
"""
import argparse
import sys
import time
from pathlib import Path

from hydrospde.cli import main

ROOT = Path(__file__).resolve().parents[1]

JOBS = [
    ("validate", "simulate"),
    ("simulate", "simulate"),
    ("cancellation", "cancellation"),
    ("galerkin-demo", "galerkin"),
    ("poincare", "poincare"),
    ("verify-noise", "verify_noise"),
    ("uniqueness", "uniqueness"),
    ("cauchy", "cauchy"),
    ("rayleigh", "rayleigh"),
    ("moments", "moments_linear"),
    ("moments", "moments_viscosity"),
]


def run(out_root: Path, only=None) -> int:
    worst = 0
    for cmd, name in JOBS:
        if only and name not in only and cmd not in only:
            continue
        argv = [cmd, "--config", str(ROOT / "configs" / f"{name}.ini")]
        if cmd != "validate":
            argv += ["--out", str(out_root / name)]
        print(f"== {cmd} ({name}.ini)", flush=True)
        t0 = time.perf_counter()
        code = main(argv)
        print(f"   exit {code} in {time.perf_counter() - t0:.1f}s", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--only", nargs="*")
    a = ap.parse_args()
    sys.exit(run(Path(a.out), a.only))
