"""Command-line front-end: generate / record / export / bench / serve."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bench import BenchConfig, run_benchmark
from .camera import DEFAULT_PITCH
from .dataset import (
    MAX_CLIP_SECONDS,
    ScenarioScript,
    balance_and_split,
    default_scenario_suite,
    default_single_script,
    export_dataset,
    load_clips,
    record_clip,
)
from .server import DEFAULT_PORT, ServerConfig, SimServer
from .world import DEFAULT_RADIUS, DEFAULT_TILE_SIZE, generate_world


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavcrowd",
        description="Deterministic aerial crowd simulator and dataset generator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a world and emit its JSON")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
    p.add_argument("--tile-size", type=float, default=DEFAULT_TILE_SIZE)
    p.add_argument("--out", default="-", help="output path, - for stdout")

    p = sub.add_parser("record", help="record scenario clips to a dataset directory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--agents", type=int, default=150)
    p.add_argument("--duration", type=float, default=MAX_CLIP_SECONDS)
    p.add_argument("--altitude", type=float, default=3.5)
    p.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
    p.add_argument("--out", required=True)
    p.add_argument("--script", help="scenario script JSON file (overrides --seed/--agents)")
    p.add_argument("--suite", type=int, metavar="N",
                   help="record the stock N-clip suite instead of a single clip")

    p = sub.add_parser("export", help="balance, split and export recorded clips")
    p.add_argument("--staging", required=True, help="directory holding recorded clips")
    p.add_argument("--out", required=True)
    p.add_argument("--split-seed", type=int, default=1)
    p.add_argument("--name", default="synthetic")

    p = sub.add_parser("bench", help="measure step+capture throughput")
    p.add_argument("--agents", type=int, help="single agent count")
    p.add_argument("--counts", help="comma-separated agent counts")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
    p.add_argument("--ticks", type=int, default=300)
    p.add_argument("--json", dest="json_out", help="write the report as JSON here")
    p.add_argument("--csv", dest="csv_out", help="write the report as CSV here")

    p = sub.add_parser("serve", help="run the streaming control service")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
    p.add_argument("--agents", type=int, default=150)
    p.add_argument("--altitude", type=float, default=3.5)
    p.add_argument("--out", default="recordings")
    p.add_argument("--unpaced", action="store_true",
                   help="run the loop at full speed instead of 30 Hz wall clock")
    return parser


def _apply_seed_env(args: argparse.Namespace) -> None:
    env = os.environ.get("UAVCROWD_SEED")
    if env is not None and hasattr(args, "seed"):
        args.seed = int(env)


def _cmd_generate(args) -> int:
    world = generate_world(args.seed, args.radius, args.tile_size)
    text = world.to_json()
    if args.out == "-":
        print(text)
    else:
        Path(args.out).write_text(text)
    return 0


def _cmd_record(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.suite:
        scripts = default_scenario_suite(count=args.suite, clip_duration_s=args.duration)
    elif args.script:
        scripts = [ScenarioScript.from_json(Path(args.script).read_text())]
    else:
        scripts = [default_single_script(args.seed, agents=args.agents,
                                         duration_s=args.duration)]
    for script in scripts:
        clip = record_clip(script, out, altitude=args.altitude, radius=args.radius)
        print(f"recorded {clip.id}: {clip.frame_count} frames ({clip.label.value})")
    return 0


def _cmd_export(args) -> int:
    clips = load_clips(args.staging)
    manifest = balance_and_split(clips, args.split_seed, dataset_name=args.name)
    summary = export_dataset(clips, manifest, args.out)
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_bench(args) -> int:
    if args.counts:
        counts = [int(c) for c in args.counts.split(",")]
    elif args.agents is not None:
        counts = [args.agents]
    else:
        counts = [0, 50, 100, 150]
    cfg = BenchConfig(seed=args.seed, radius=args.radius)
    report = run_benchmark(counts, cfg, duration_ticks=args.ticks)
    print(report.to_table())
    if args.json_out:
        Path(args.json_out).write_text(report.to_json())
    if args.csv_out:
        Path(args.csv_out).write_text(report.to_csv())
    return 0


def _cmd_serve(args) -> int:
    config = ServerConfig(
        host=args.host,
        port=args.port,
        seed=args.seed,
        radius=args.radius,
        agents=args.agents,
        altitude=args.altitude,
        paced=not args.unpaced,
        out_dir=args.out,
    )
    Path(args.out).mkdir(parents=True, exist_ok=True)
    try:
        server = SimServer(config)
        server.start()
    except OSError as e:
        print(f"failed to bind {args.host}:{args.port}: {e}", file=sys.stderr)
        return 1
    print(f"serving on {args.host}:{server.port} (seed {args.seed})", flush=True)
    server.serve_forever()
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "record": _cmd_record,
    "export": _cmd_export,
    "bench": _cmd_bench,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _apply_seed_env(args)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
