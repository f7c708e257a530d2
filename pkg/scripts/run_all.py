"""Run every czlab experiment family with its default settings.

Reports land in the output directory (default ./results); the exit code is
the number of runs whose invariants failed.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from czlab.cli import main

RUNS = [
    ("probe-hilbert", ["probe", "--kernel", "hilbert"]),
    ("probe-riesz1", ["probe", "--kernel", "riesz1", "--ball", "0.5,0.5,4", "--half-width", "128", "--n", "256"]),
    ("awf-hilbert", ["awf", "--kernel", "hilbert", "--d", "1"]),
    ("awf-riesz1", ["awf", "--kernel", "riesz1", "--d", "2"]),
    ("awf-beurling", ["awf", "--kernel", "ahlfors-beurling", "--d", "2"]),
    ("decomp-1d", ["decomp", "--d", "1"]),
    ("decomp-2d", ["decomp", "--d", "2", "--n", "64"]),
    ("theta-log", ["theta", "--mode", "single", "--b", "log"]),
    ("theta-sqrt", ["theta", "--mode", "single", "--b", "sqrt", "--p", "1.5", "--q", "6"]),
    ("theta-bump", ["theta", "--mode", "multi", "--b", "bump", "--p", "3", "--q", "2"]),
    ("theta-weighted", ["theta", "--mode", "weighted", "--b", "log"]),
    ("median-x", ["median", "--b", "x"]),
    ("median-log", ["median", "--b", "log"]),
    ("classify-log", ["classify", "--b", "log"]),
    ("classify-sqrt", ["classify", "--b", "sqrt"]),
    ("jacobian", ["jacobian"]),
    ("sconvex", ["sconvex"]),
    ("roots", ["roots", "--d", "4", "--N", "5"]),
]


def run(out: Path, only=None) -> int:
    failed = 0
    for name, argv in RUNS:
        if only and not any(o in name for o in only):
            continue
        t0 = time.perf_counter()
        code = main(argv + ["--out", str(out), "--name", name, "--emit-plotdata"])
        summary = json.loads((out / f"{name}.summary.json").read_text())
        print(f"  {name:16s} exit {code}  {time.perf_counter() - t0:6.2f}s  {summary['results'].get('error', '')}")
        failed += code != 0
    return failed


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*", help="substrings of run names to keep")
    args = ap.parse_args()
    sys.exit(run(Path(args.out), args.only))
