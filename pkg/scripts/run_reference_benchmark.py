#!/usr/bin/env python3
"""Run the full reference benchmark pipeline into runs/reference/.

Generates the shipped synthetic dataset, computes the dissimilarity matrix,
evaluates the six-classifier grid on all three feature families, and leaves
the accuracy tables next to the raw JSON report. Re-running with the same
configs reproduces every output byte for byte.
"""

import argparse
import os
import sys
import time
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from phytopulse.cli import main as cli_main  # noqa: E402


def run(argv):
    print("+ phytopulse " + " ".join(argv))
    code = cli_main(argv)
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(REPO / "runs" / "reference"))
    parser.add_argument("--workers", type=int, default=os.cpu_count())
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = out / "dataset.jsonl"
    matrix = out / "matrix.csv"
    report = out / "report"

    start = time.monotonic()
    run(["synth", "--config", str(REPO / "configs" / "reference_benchmark.json"),
         "--out", str(dataset)])
    for family in ("derived", "proposed"):
        run(["extract", "--dataset", str(dataset), "--family", family,
             "--out", str(out / f"features_{family}.csv")])
    run(["dtw", "--dataset", str(dataset), "--out", str(matrix),
         "--workers", str(args.workers)])
    run(["evaluate", "--dataset", str(dataset),
         "--config", str(REPO / "configs" / "reference_eval.json"),
         "--out", str(report), "--matrix", str(matrix),
         "--workers", str(args.workers)])
    print(f"done in {time.monotonic() - start:.0f}s")
    print((report / "tables.txt").read_text())


if __name__ == "__main__":
    main()
