#!/usr/bin/env python3
"""Sweep agent counts and report step+capture throughput (the framerate
experiment: three 640x480 passes per frame)."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from uavcrowd.bench import BenchConfig, run_benchmark


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--counts", default="0,25,50,75,100,125,150")
    parser.add_argument("--ticks", type=int, default=300)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--csv", help="also write a CSV for plotting")
    args = parser.parse_args(argv)

    counts = [int(c) for c in args.counts.split(",")]
    report = run_benchmark(counts, BenchConfig(seed=args.seed), duration_ticks=args.ticks)
    print(report.to_table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    ok = all(r.mean_fps >= 25.0 for r in report.rows if r.agent_count == 150)
    print("25 fps @ 150 agents:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
