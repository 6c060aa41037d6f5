#!/usr/bin/env python3
"""Walk an exported dataset the way a training pipeline would.

Validates the manifest against the published schema, then enumerates every
clip's frames and labels, checking the files exist and parse. Exits non-zero
on the first inconsistency.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from uavcrowd.dataset import validate_manifest
from uavcrowd.render import RenderPass, read_pgm, read_ppm


def enumerate_dataset(root: Path, deep: bool = False) -> dict:
    manifest = json.loads((root / "manifest.json").read_text())
    validate_manifest(manifest)
    counts: dict[str, dict[str, int]] = {}
    frames_seen = 0
    for row in manifest["clips"]:
        clip_dir = root / row["split"] / row["label"] / row["id"]
        if not clip_dir.is_dir():
            raise FileNotFoundError(f"missing clip directory {clip_dir}")
        stems = sorted(p.stem.split("_", 1)[1] for p in clip_dir.glob("frame_*.ppm"))
        if len(stems) != row["frames"]:
            raise ValueError(
                f"{row['id']}: manifest says {row['frames']} frames, found {len(stems)}"
            )
        check = stems if deep else [stems[0], stems[-1]]
        for stem in check:
            rgb = read_ppm(clip_dir / f"frame_{stem}.ppm")
            seg = read_ppm(clip_dir / f"seg_{stem}.ppm", RenderPass.SEGMENTATION)
            depth = read_pgm(clip_dir / f"depth_{stem}.pgm")
            ann = json.loads((clip_dir / f"ann_{stem}.json").read_text())
            assert rgb.width == seg.width == depth.width
            assert isinstance(ann["boxes"], list)
        frames_seen += row["frames"]
        counts.setdefault(row["split"], {}).setdefault(row["label"], 0)
        counts[row["split"]][row["label"]] += 1
    return {"clips": len(manifest["clips"]), "frames": frames_seen, "counts": counts}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", required=True, help="exported dataset root")
    parser.add_argument("--deep", action="store_true",
                        help="open every frame instead of first/last per clip")
    args = parser.parse_args(argv)
    try:
        summary = enumerate_dataset(Path(args.dir), deep=args.deep)
    except Exception as e:
        print(f"INVALID: {e}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
