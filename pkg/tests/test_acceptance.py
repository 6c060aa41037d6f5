"""Acceptance gate: one test per release criterion, each printing a
[PASS]/[FAIL] line (run with -s or check captured output).

Criteria and tolerances are pinned here; nothing is deferred to later
calibration. Heavy end-to-end checks (full recording determinism, the
240-clip suite, the throughput gate) live here rather than in the unit
modules.
"""

import hashlib
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from uavcrowd.annotate import components_of_mask, merge_groups
from uavcrowd.behavior import (
    Activity,
    CANONICAL_DT,
    EventKind,
    NONVIOLENT_ACTIVITIES,
    Scenario,
    SimState,
    SpawnConfig,
    step,
)
from uavcrowd.bench import BenchConfig, run_benchmark
from uavcrowd.camera import DEFAULT_INTRINSICS, UavState, project, unproject
from uavcrowd.dataset import (
    balance_and_split,
    default_scenario_suite,
    export_dataset,
    record_clip,
    validate_manifest,
)
from uavcrowd.render import (
    CLS_AGENT,
    PALETTE,
    PALETTE_COLORS,
    RenderPass,
    _rasterize,
    render_frame,
)
from uavcrowd.rng import Rng
from uavcrowd.world import generate_world, hex_to_world, world_to_hex

from test_annotate import _oracle_components, _oracle_merge
from test_render import _sim_with_agents, _empty_sim

K = DEFAULT_INTRINSICS


def _report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" — {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


# -------------------------------------------------------------------------
# Criterion 1: published split-table reproduction (exact, < 1 s)

def test_acceptance_split_tables():
    cases = {
        (123, 123): (158, 38, 50),
        (100, 100): (128, 32, 40),
        (120, 120): (154, 38, 48),
        (230, 120): (154, 38, 48),
    }
    t0 = time.perf_counter()
    mismatches = []
    for (nv, nn), expected in cases.items():
        inv = [(f"v{i}", Scenario.VIOLENT) for i in range(nv)] + [
            (f"n{i}", Scenario.NON_VIOLENT) for i in range(nn)
        ]
        manifest = balance_and_split(inv, split_seed=17)
        got = tuple(
            sum(1 for s in manifest.assignments.values() if s == split)
            for split in ("train", "val", "test")
        )
        if got != expected:
            mismatches.append(((nv, nn), got, expected))
    elapsed = time.perf_counter() - t0
    _report(
        "split-table reproduction (4 class-count rows, exact)",
        not mismatches and elapsed < 1.0,
        f"{len(cases)} rows in {elapsed * 1000:.0f} ms; mismatches={mismatches}",
    )


# -------------------------------------------------------------------------
# Criterion 2: segmentation color contract (exact byte equality)

def test_acceptance_segmentation_contract():
    rng = Rng(9090)
    agent_rgb = np.array(PALETTE.agent, dtype=np.uint8)
    scenes_checked = 0
    attempts = 0
    bad = 0
    while scenes_checked < 50 and attempts < 200:
        attempts += 1
        world = generate_world(rng.randrange(100_000), 4)
        nodes = sorted(world.nav.nodes, key=lambda c: (c.r, c.q))
        target_tile = nodes[rng.randrange(len(nodes))]
        tx, ty = hex_to_world(target_tile, world.tile_size)
        altitude = rng.uniform(3.0, 10.0)
        pitch = rng.uniform(math.radians(55), math.pi / 2)
        yaw = rng.uniform(0.0, 2 * math.pi)
        standoff = altitude / math.tan(pitch) if pitch < math.pi / 2 - 1e-9 else 0.0
        u = UavState(
            pos=(tx - standoff * math.cos(yaw), ty - standoff * math.sin(yaw), altitude),
            yaw=yaw, pitch=pitch,
        )
        positions = []
        for _ in range(1 + rng.randrange(6)):
            px = tx + rng.uniform(-1.5, 1.5)
            py = ty + rng.uniform(-1.5, 1.5)
            if world.is_walkable(world_to_hex(px, py, world.tile_size)):
                positions.append((px, py))
        if not positions:
            continue
        sim = _sim_with_agents(world, positions)
        bufs = _rasterize(sim, world, u, K)
        seg = render_frame(sim, world, u, K, RenderPass.SEGMENTATION)
        agent_mask = bufs.cls == CLS_AGENT
        if not agent_mask.any():
            continue  # occluded: scene does not meet the premise
        scenes_checked += 1
        if not np.array_equal(
            np.all(seg.pixels == agent_rgb, axis=2), agent_mask
        ):
            bad += 1
        colors = {tuple(c) for c in np.unique(seg.pixels.reshape(-1, 3), axis=0).tolist()}
        if not colors <= PALETTE_COLORS:
            bad += 1

    empty_bad = 0
    for seed in range(10):
        world = generate_world(seed, 3)
        u = UavState(pos=(0.0, 0.0, 6.0), pitch=math.radians(70))
        seg = render_frame(_empty_sim(world), world, u, K, RenderPass.SEGMENTATION)
        if np.all(seg.pixels == agent_rgb, axis=2).any():
            empty_bad += 1

    _report(
        "segmentation contract: agent pixels exactly (81,13,36)",
        scenes_checked == 50 and bad == 0 and empty_bad == 0,
        f"{scenes_checked} agent scenes, {bad} violations; "
        f"{empty_bad} empty scenes with agent pixels",
    )


# -------------------------------------------------------------------------
# Criterion 3: ground-truth pipeline equals brute-force oracle (500 masks)

def test_acceptance_ground_truth_oracle():
    rng = Rng(5150)
    mismatches = 0
    for i in range(500):
        h = 8 + rng.randrange(121)  # up to 128
        w = 8 + rng.randrange(121)
        mask = np.zeros((h, w), dtype=bool)
        # blobs plus salt: resembles capsule silhouettes with stragglers
        for _ in range(rng.randrange(10)):
            y, x = rng.randrange(h), rng.randrange(w)
            bh, bw = 1 + rng.randrange(12), 1 + rng.randrange(12)
            mask[y : y + bh, x : x + bw] = True
        for _ in range(rng.randrange(60)):
            mask[rng.randrange(h), rng.randrange(w)] = True

        comps = components_of_mask(mask)
        if comps != _oracle_components(mask):
            mismatches += 1
            continue
        gap = rng.randrange(20)
        if merge_groups(comps, gap_px=gap) != _oracle_merge(comps, gap):
            mismatches += 1
    _report(
        "ground-truth oracle equivalence (500 random masks <= 128x128)",
        mismatches == 0,
        f"mismatches={mismatches}",
    )


# -------------------------------------------------------------------------
# Criterion 4: byte-identical recording runs (record --seed 7, <= 2 min)

def _dir_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_acceptance_record_determinism(tmp_path):
    t0 = time.perf_counter()
    digests = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        res = subprocess.run(
            [sys.executable, "-m", "uavcrowd", "record",
             "--seed", "7", "--agents", "150", "--duration", "10",
             "--out", str(out)],
            capture_output=True, text=True, timeout=300,
        )
        assert res.returncode == 0, res.stderr
        digests.append(_dir_digest(out))
    elapsed = time.perf_counter() - t0
    frames = len(list((tmp_path / "run_a").glob("*/frame_*.ppm")))
    _report(
        "record determinism: byte-identical archives, <= 2 min",
        digests[0] == digests[1] and elapsed <= 120.0 and frames == 300,
        f"{frames} frames per run, both runs in {elapsed:.1f} s, "
        f"digest {digests[0][:12]}",
    )


# -------------------------------------------------------------------------
# Criterion 5: throughput gate (mean fps >= 25 at 150 agents)

def test_acceptance_throughput_gate():
    report = run_benchmark([150], BenchConfig(), duration_ticks=300)
    row = report.rows[0]
    _report(
        "throughput: mean fps >= 25 at 150 agents, three 640x480 passes",
        row.mean_fps >= 25.0,
        f"mean {row.mean_fps:.1f} fps, p5 {row.p5_fps:.1f} fps "
        f"({report.machine_info})",
    )


# -------------------------------------------------------------------------
# Criterion 6 + schema substitute: suite composition, export, enumeration

def test_acceptance_dataset_suite_shape(tmp_path):
    # the stock 240-script suite at desk-scale clip length (5 frames/clip);
    # composition, per-clip caps and frame geometry are what the criterion pins
    suite = default_scenario_suite(count=240, clip_duration_s=5 / 30)
    staging = tmp_path / "staging"
    clips = [record_clip(s, staging) for s in suite]

    labels = [c.label for c in clips]
    n_violent = sum(1 for l in labels if l is Scenario.VIOLENT)
    n_nonviolent = len(labels) - n_violent
    caps_ok = all(c.frame_count <= 300 for c in clips)
    geom_ok = all(c.width == 640 and c.height == 480 for c in clips)

    manifest = balance_and_split(clips, split_seed=1)
    out = tmp_path / "dataset"
    export_dataset(clips, manifest, out)
    doc = json.loads((out / "manifest.json").read_text())
    validate_manifest(doc)
    per_label = {"violent": 0, "nonviolent": 0}
    for row in doc["clips"]:
        per_label[row["label"]] += 1

    # smoke: an external pipeline can enumerate frames and labels
    res = subprocess.run(
        [sys.executable, str(Path(__file__).parent.parent / "scripts" / "validate_export.py"),
         "--dir", str(out)],
        capture_output=True, text=True, timeout=600,
    )

    _report(
        "synthetic suite: 240 clips, 120 per class, <= 300 frames at 640x480",
        len(clips) == 240 and n_violent == 120 and n_nonviolent == 120
        and caps_ok and geom_ok and per_label == {"violent": 120, "nonviolent": 120}
        and res.returncode == 0,
        f"{len(clips)} clips ({n_violent}/{n_nonviolent}), "
        f"manifest labels {per_label}, enumerator rc={res.returncode}",
    )


# -------------------------------------------------------------------------
# Criterion 7: geometry (round-trip < 1e-6 m; nadir depth exact)

def test_acceptance_geometry():
    rng = Rng(606)
    u = UavState(pos=(4.0, -9.0, 55.0), yaw=0.8, pitch=1.0)
    worst = 0.0
    projected = 0
    while projected < 1000:
        p = (rng.uniform(-120, 120), rng.uniform(-120, 120), rng.uniform(0, 40))
        res = project(p, u, K)
        if res is None:
            continue
        projected += 1
        back = unproject(*res, u, K)
        worst = max(worst, max(abs(a - b) for a, b in zip(p, back)))

    world = generate_world(5, 2)
    nadir = UavState(pos=(0.0, 0.0, 3.5), pitch=math.pi / 2)
    depth = render_frame(_empty_sim(world), world, nadir, K, RenderPass.DEPTH)
    center_mm = int(depth.pixels[240, 320])

    _report(
        "geometry: projection round-trip < 1e-6 m and nadir depth 3500 mm",
        worst < 1e-6 and center_mm == 3500,
        f"worst round-trip {worst:.2e} m, center depth {center_mm} mm",
    )


# -------------------------------------------------------------------------
# Criterion 8: behavior invariants over 10,000 random ticks

def test_acceptance_behavior_invariants():
    rng = Rng(4242)
    ticks = 0
    violations = []

    def check_motion(sim, prev_pos):
        bound = 6.0 * CANONICAL_DT + 1e-9
        for a in sim.agents:
            if not sim.world.is_walkable(
                world_to_hex(a.pos[0], a.pos[1], sim.world.tile_size)
            ):
                violations.append(f"agent {a.id} on building tile at tick {sim.tick}")
            d = math.hypot(a.pos[0] - prev_pos[a.id][0], a.pos[1] - prev_pos[a.id][1])
            if d > bound:
                violations.append(f"agent {a.id} moved {d:.3f} m in one tick")

    # mixed scenarios: building avoidance + speed bound + disperse reaction
    for _ in range(24):
        world = generate_world(rng.randrange(10_000), 5)
        sim = SimState.create(
            world, SpawnConfig(total_agents=10 + rng.randrange(40),
                               violent_fraction=0.5)
        )
        for _ in range(250):
            prev_pos = {a.id: a.pos for a in sim.agents}
            shots = [e for e in sim.events if e.tick == sim.tick - 1
                     and e.kind is EventKind.GUNSHOT]
            before = {a.id: a for a in sim.agents}
            sim = step(sim)
            ticks += 1
            check_motion(sim, prev_pos)
            if shots:
                for a in sim.agents:
                    grp = sim.groups[a.group_id]
                    if grp.scenario is not Scenario.NON_VIOLENT:
                        continue
                    near = [
                        s for s in shots
                        if math.hypot(before[a.id].pos[0] - s.origin[0],
                                      before[a.id].pos[1] - s.origin[1]) <= 30.0
                    ]
                    if not near:
                        continue
                    if a.state.activity is not Activity.DISPERSE:
                        violations.append(f"agent {a.id} failed to disperse")
                        continue
                    origin = min(
                        near,
                        key=lambda s: (before[a.id].pos[0] - s.origin[0]) ** 2
                        + (before[a.id].pos[1] - s.origin[1]) ** 2,
                    ).origin
                    to_shot = (origin[0] - a.pos[0], origin[1] - a.pos[1])
                    dot = math.cos(a.heading) * to_shot[0] + math.sin(a.heading) * to_shot[1]
                    if dot >= 0 and math.hypot(*to_shot) > 1e-9:
                        violations.append(
                            f"agent {a.id} fleeing toward gunshot (dot {dot:.3f})"
                        )

    # purely non-violent scenarios: no gunshots, no violent activities
    for _ in range(10):
        world = generate_world(rng.randrange(10_000), 5)
        sim = SimState.create(
            world, SpawnConfig(total_agents=10 + rng.randrange(20),
                               violent_fraction=0.0)
        )
        for _ in range(400):
            sim = step(sim)
            ticks += 1
        if any(e.kind is EventKind.GUNSHOT for e in sim.events):
            violations.append("gunshot in non-violent run")
        for a in sim.agents:
            if a.state.activity not in NONVIOLENT_ACTIVITIES:
                violations.append(f"non-violent agent holds {a.state.activity}")

    _report(
        "behavior invariants over 10,000 random ticks",
        ticks >= 10_000 and not violations,
        f"{ticks} ticks, violations: {violations[:3]}",
    )
