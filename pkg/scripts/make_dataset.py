#!/usr/bin/env python3
"""Produce the full synthetic dataset: 240 ten-second clips (120 per class),
balanced, split, and exported with annotations.

Full scale writes roughly 180 GB of uncompressed frames; pass --clip-seconds
to shrink clips for a quick end-to-end check.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from uavcrowd.dataset import (
    balance_and_split,
    default_scenario_suite,
    export_dataset,
    record_clip,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--staging", default=None,
                        help="frame staging directory (default <out>/_staging)")
    parser.add_argument("--clips", type=int, default=240)
    parser.add_argument("--clip-seconds", type=float, default=10.0)
    parser.add_argument("--split-seed", type=int, default=1)
    args = parser.parse_args(argv)

    out = Path(args.out)
    staging = Path(args.staging) if args.staging else out / "_staging"
    staging.mkdir(parents=True, exist_ok=True)

    suite = default_scenario_suite(count=args.clips, clip_duration_s=args.clip_seconds)
    clips = []
    t0 = time.time()
    for i, script in enumerate(suite):
        clips.append(record_clip(script, staging))
        if (i + 1) % 10 == 0:
            rate = (i + 1) / (time.time() - t0)
            print(f"recorded {i + 1}/{len(suite)} clips ({rate:.2f} clips/s)", flush=True)

    manifest = balance_and_split(clips, args.split_seed)
    summary = export_dataset(clips, manifest, out)
    print(f"exported {summary['clips']} clips / {summary['frames']} frames to {out}")
    print(f"splits: {summary['per_split']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
