"""Throughput measurement: frames per second versus concurrent agent count.

A frame is one simulation step plus one full three-pass capture at the
configured resolution, i.e. the same work a recording session performs.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from dataclasses import asdict, dataclass

import numpy as np

from .behavior import SimState, SpawnConfig
from .camera import DEFAULT_INTRINSICS, DEFAULT_PITCH
from .render import capture
from .world import DEFAULT_MIX, InvalidParameterError, generate_world

MIN_MEASURE_TICKS = 300
WARMUP_TICKS = 60


@dataclass(frozen=True)
class BenchConfig:
    seed: int = 42
    radius: int = 8
    tile_size: float = 10.0
    altitude: float = 3.5
    pitch: float = DEFAULT_PITCH
    violent_fraction: float = 0.5


@dataclass(frozen=True)
class BenchRow:
    agent_count: int
    mean_fps: float
    p5_fps: float
    ticks_measured: int


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    machine_info: str
    config_hash: str

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "machine_info": self.machine_info,
            "config_hash": self.config_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        lines = [f"{'agents':>8} {'mean_fps':>10} {'p5_fps':>10} {'ticks':>7}"]
        for r in self.rows:
            lines.append(
                f"{r.agent_count:>8} {r.mean_fps:>10.1f} {r.p5_fps:>10.1f}"
                f" {r.ticks_measured:>7}"
            )
        lines.append(f"# {self.machine_info}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["agent_count,mean_fps,p5_fps,ticks_measured"]
        for r in self.rows:
            lines.append(f"{r.agent_count},{r.mean_fps:.3f},{r.p5_fps:.3f},{r.ticks_measured}")
        return "\n".join(lines) + "\n"


def _machine_info() -> str:
    cpu = platform.processor() or platform.machine() or "unknown cpu"
    return f"{platform.platform()}; {cpu}; {os.cpu_count()} logical cores"


from .behavior import step as _step
from .dataset import frame_point


def _bench_one(count: int, cfg: BenchConfig, duration_ticks: int) -> BenchRow:
    world = generate_world(cfg.seed, cfg.radius, cfg.tile_size, DEFAULT_MIX)
    if count == 0:
        sim = SimState(world=world, groups=(), agents=())
        target = (0.0, 0.0)
    else:
        sim = SimState.create(
            world, SpawnConfig(total_agents=count, violent_fraction=cfg.violent_fraction)
        )
        target = sim.groups[0].anchor
    plan = frame_point(target, altitude=cfg.altitude, pitch=cfg.pitch)
    uav = plan.initial_state()

    for _ in range(WARMUP_TICKS):
        capture(sim, world, uav, DEFAULT_INTRINSICS)
        sim = _step(sim)

    times = np.empty(duration_ticks)
    for i in range(duration_ticks):
        t0 = time.perf_counter()
        capture(sim, world, uav, DEFAULT_INTRINSICS)
        sim = _step(sim)
        times[i] = time.perf_counter() - t0

    return BenchRow(
        agent_count=count,
        mean_fps=duration_ticks / float(times.sum()),
        p5_fps=1.0 / float(np.percentile(times, 95)),
        ticks_measured=duration_ticks,
    )


def run_benchmark(
    counts: list[int],
    cfg: BenchConfig = BenchConfig(),
    duration_ticks: int = MIN_MEASURE_TICKS,
) -> BenchReport:
    """Measure step+capture throughput for each agent count.

    Rows come back sorted by agent count, one per requested entry.
    """
    if not counts:
        raise InvalidParameterError("counts must be non-empty")
    if any(c < 0 for c in counts):
        raise InvalidParameterError("agent counts must be non-negative")
    if duration_ticks < MIN_MEASURE_TICKS:
        raise InvalidParameterError(
            f"duration_ticks must be >= {MIN_MEASURE_TICKS}, got {duration_ticks}"
        )
    rows = tuple(_bench_one(c, cfg, duration_ticks) for c in sorted(counts))
    config_doc = json.dumps({**asdict(cfg), "duration_ticks": duration_ticks}, sort_keys=True)
    return BenchReport(
        rows=rows,
        machine_info=_machine_info(),
        config_hash=hashlib.sha256(config_doc.encode()).hexdigest()[:16],
    )
