"""Clip recording, class balancing, leak-free splits, and dataset export.

A scenario script fully determines a clip: the world grows from the script
seed, groups spawn from the script's group specs, and the UAV holds a
deterministic pose, so re-recording a script yields byte-identical frames.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .annotate import annotation_record, extract_components, merge_groups
from .behavior import (
    Activity,
    CANONICAL_DT,
    GroupSpec,
    Scenario,
    SimState,
    SpawnConfig,
    step,
)
from .camera import (
    DEFAULT_INTRINSICS,
    DEFAULT_PITCH,
    CameraIntrinsics,
    ControlCommand,
    UavState,
    apply_control,
)
from .render import capture, write_pgm, write_ppm
from .rng import stream
from .world import DEFAULT_MIX, DEFAULT_RADIUS, DEFAULT_TILE_SIZE, InvalidParameterError, generate_world

FPS = 30
MAX_CLIP_SECONDS = 10.0
MAX_CLIP_FRAMES = 300
RECORD_ALTITUDE = 3.5


class InvalidScriptError(ValueError):
    """A scenario script violates the recording contract."""


class InsufficientDataError(RuntimeError):
    """Not enough labeled clips to balance and split."""


class ExportError(RuntimeError):
    """Dataset export failed; partial output has been removed."""


@dataclass(frozen=True)
class ScenarioScript:
    seed: int
    duration_s: float
    groups: tuple[GroupSpec, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "duration_s": self.duration_s,
                "groups": [
                    {
                        "size": g.size,
                        "scenario": g.scenario.value,
                        "activities": None
                        if g.activities is None
                        else [a.value for a in g.activities],
                    }
                    for g in self.groups
                ],
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> ScenarioScript:
        doc = json.loads(text)
        groups = tuple(
            GroupSpec(
                size=g["size"],
                scenario=Scenario(g["scenario"]),
                activities=None
                if g.get("activities") is None
                else tuple(Activity(a) for a in g["activities"]),
            )
            for g in doc["groups"]
        )
        return cls(seed=doc["seed"], duration_s=doc["duration_s"], groups=groups)


@dataclass(frozen=True)
class UavPlan:
    """Camera trajectory for a recording: a hover with optional drift."""

    start: tuple[float, float, float]
    yaw: float = 0.0
    pitch: float = DEFAULT_PITCH
    vel: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def initial_state(self) -> UavState:
        return UavState(pos=self.start, vel=(0.0, 0.0, 0.0), yaw=self.yaw, pitch=self.pitch)

    def advance(self, u: UavState, dt: float) -> UavState:
        if self.vel == (0.0, 0.0, 0.0):
            return u
        return apply_control(u, ControlCommand(*self.vel), dt)


def frame_point(
    target: tuple[float, float],
    altitude: float = RECORD_ALTITUDE,
    pitch: float = DEFAULT_PITCH,
    yaw: float = 0.0,
) -> UavPlan:
    """Hover plan whose optical axis meets the ground at ``target``."""
    standoff = altitude / math.tan(pitch) if pitch < math.pi / 2 - 1e-9 else 0.0
    return UavPlan(
        start=(
            target[0] - standoff * math.cos(yaw),
            target[1] - standoff * math.sin(yaw),
            altitude,
        ),
        yaw=yaw,
        pitch=pitch,
    )


@dataclass(frozen=True)
class Clip:
    id: str
    label: Scenario
    frames: tuple[str, ...]  # frame stems, in tick order
    directory: str
    duration_s: float
    scenario_seed: int
    fps: int = FPS
    width: int = 640
    height: int = 480

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def meta(self) -> dict:
        return {
            "id": self.id,
            "label": self.label.value,
            "frames": list(self.frames),
            "duration_s": self.duration_s,
            "seed": self.scenario_seed,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_meta(cls, doc: dict, directory: str) -> Clip:
        return cls(
            id=doc["id"],
            label=Scenario(doc["label"]),
            frames=tuple(doc["frames"]),
            directory=directory,
            duration_s=doc["duration_s"],
            scenario_seed=doc["seed"],
            fps=doc["fps"],
            width=doc["width"],
            height=doc["height"],
        )


def script_label(script: ScenarioScript) -> Scenario:
    """Dominant scenario by member count; ties count as violent."""
    violent = sum(g.size for g in script.groups if g.scenario is Scenario.VIOLENT)
    other = sum(g.size for g in script.groups if g.scenario is Scenario.NON_VIOLENT)
    return Scenario.VIOLENT if violent >= other else Scenario.NON_VIOLENT


def clip_id_for(script: ScenarioScript) -> str:
    digest = hashlib.sha256(script.to_json().encode("utf-8")).hexdigest()[:12]
    return f"{script_label(script).value}_{digest}"


def record_clip(
    script: ScenarioScript,
    out_dir: str | os.PathLike,
    uav_plan: UavPlan | None = None,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    altitude: float = RECORD_ALTITUDE,
    radius: int = DEFAULT_RADIUS,
) -> Clip:
    """Run the scripted simulation at 30 Hz, capturing every tick.

    Writes frame_%05d.ppm / seg_%05d.ppm / depth_%05d.pgm / ann_%05d.json
    plus clip.json into ``out_dir/<clip id>/``. Without an explicit plan the
    UAV hovers at ``altitude`` framing the first group's anchor.
    """
    if script.duration_s > MAX_CLIP_SECONDS + 1e-9:
        raise InvalidScriptError(
            f"clip duration {script.duration_s}s exceeds {MAX_CLIP_SECONDS}s"
        )
    if script.duration_s <= 0:
        raise InvalidScriptError("clip duration must be positive")

    world = generate_world(script.seed, radius, DEFAULT_TILE_SIZE, DEFAULT_MIX)
    sim = SimState.create(world, SpawnConfig(groups=script.groups))
    plan = uav_plan or frame_point(sim.groups[0].anchor, altitude=altitude)
    uav = plan.initial_state()

    clip_id = clip_id_for(script)
    clip_dir = Path(out_dir) / clip_id
    clip_dir.mkdir(parents=True, exist_ok=True)

    n_frames = round(script.duration_s * FPS)
    stems = []
    for i in range(n_frames):
        fs = capture(sim, world, uav, intrinsics)
        stem = f"{i:05d}"
        write_ppm(fs.rgb, clip_dir / f"frame_{stem}.ppm")
        write_ppm(fs.seg, clip_dir / f"seg_{stem}.ppm")
        write_pgm(fs.depth, clip_dir / f"depth_{stem}.pgm")
        boxes = merge_groups(extract_components(fs.seg))
        with open(clip_dir / f"ann_{stem}.json", "w") as f:
            json.dump(annotation_record(fs.tick, boxes), f, separators=(",", ":"))
        stems.append(stem)
        sim = step(sim, CANONICAL_DT)
        uav = plan.advance(uav, CANONICAL_DT)

    clip = Clip(
        id=clip_id,
        label=script_label(script),
        frames=tuple(stems),
        directory=str(clip_dir),
        duration_s=script.duration_s,
        scenario_seed=script.seed,
        width=intrinsics.width,
        height=intrinsics.height,
    )
    with open(clip_dir / "clip.json", "w") as f:
        json.dump(clip.meta(), f, separators=(",", ":"))
    return clip


# ---------------------------------------------------------------------------
# balancing and splitting

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitManifest:
    dataset_name: str
    split_seed: int
    counts: dict[str, dict[str, int]] = field(repr=False)  # split -> label -> n
    assignments: dict[str, str] = field(repr=False)  # clip id -> split

    def ids_in(self, split: str) -> list[str]:
        return sorted(cid for cid, s in self.assignments.items() if s == split)


def _clip_inventory(clips) -> list[tuple[str, Scenario]]:
    inventory = []
    for c in clips:
        if hasattr(c, "id") and hasattr(c, "label"):
            inventory.append((c.id, c.label))
        else:
            cid, label = c
            inventory.append((cid, label if isinstance(label, Scenario) else Scenario(label)))
    return inventory


def split_counts(per_class: int) -> tuple[int, int, int]:
    """(train, val, test) sizes for one class of ``per_class`` clips:
    test takes ceil(20%), validation floor(20%) of the remainder."""
    test = math.ceil(0.2 * per_class)
    val = math.floor(0.2 * (per_class - test))
    return per_class - test - val, val, test


def balance_and_split(
    clips, split_seed: int, dataset_name: str = "synthetic"
) -> SplitManifest:
    """Subsample every class to the minority count, then assign train/val/test
    by a seeded shuffle within each class. Deterministic in (clip ids,
    split_seed) and invariant to input order."""
    inventory = _clip_inventory(clips)
    by_label: dict[Scenario, list[str]] = {Scenario.VIOLENT: [], Scenario.NON_VIOLENT: []}
    for cid, label in inventory:
        by_label[label].append(cid)
    for label, ids in by_label.items():
        if not ids:
            raise InsufficientDataError(f"no clips labeled {label.value}")

    per_class = min(len(ids) for ids in by_label.values())
    train_n, val_n, test_n = split_counts(per_class)

    counts = {s: {} for s in SPLITS}
    assignments: dict[str, str] = {}
    for label, ids in sorted(by_label.items(), key=lambda kv: kv[0].value):
        ordered = sorted(ids)
        stream(split_seed, f"split/{label.value}").shuffle(ordered)
        kept = ordered[:per_class]
        for cid in kept[:test_n]:
            assignments[cid] = "test"
        for cid in kept[test_n : test_n + val_n]:
            assignments[cid] = "val"
        for cid in kept[test_n + val_n :]:
            assignments[cid] = "train"
        counts["train"][label.value] = train_n
        counts["val"][label.value] = val_n
        counts["test"][label.value] = test_n

    return SplitManifest(
        dataset_name=dataset_name,
        split_seed=split_seed,
        counts=counts,
        assignments=assignments,
    )


# ---------------------------------------------------------------------------
# export

MANIFEST_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["dataset", "split_seed", "clips"],
    "properties": {
        "dataset": {"type": "string"},
        "split_seed": {"type": "integer"},
        "clips": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "label", "split", "frames", "duration_s", "seed"],
                "properties": {
                    "id": {"type": "string"},
                    "label": {"enum": ["violent", "nonviolent"]},
                    "split": {"enum": ["train", "val", "test"]},
                    "frames": {"type": "integer", "minimum": 1},
                    "duration_s": {"type": "number", "exclusiveMinimum": 0},
                    "seed": {"type": "integer"},
                },
            },
        },
    },
}


def validate_manifest(doc: dict) -> None:
    jsonschema.validate(doc, MANIFEST_SCHEMA)


def _place_frame_files(src_dir: Path, dst_dir: Path, stems) -> None:
    dst_dir.mkdir(parents=True, exist_ok=True)
    for stem in stems:
        for prefix, ext in (("frame", "ppm"), ("seg", "ppm"), ("depth", "pgm"), ("ann", "json")):
            name = f"{prefix}_{stem}.{ext}"
            src, dst = src_dir / name, dst_dir / name
            try:
                os.link(src, dst)
            except OSError:
                shutil.copyfile(src, dst)


def export_dataset(
    clips: list[Clip], manifest: SplitManifest, out_dir: str | os.PathLike
) -> dict:
    """Materialize ``out_dir/<split>/<label>/<clip_id>/`` frame archives and
    the top-level manifest.json. Idempotent; removes its own partial output
    on failure."""
    if not clips:
        raise InsufficientDataError("no clips to export")
    by_id = {c.id: c for c in clips}
    unknown = [cid for cid in manifest.assignments if cid not in by_id]
    if unknown:
        raise ExportError(f"manifest references unknown clips: {unknown[:3]}")

    out = Path(out_dir)
    created: list[Path] = []
    rows = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for cid in sorted(manifest.assignments):
            clip = by_id[cid]
            split = manifest.assignments[cid]
            dst = out / split / clip.label.value / cid
            created.append(dst)
            _place_frame_files(Path(clip.directory), dst, clip.frames)
            rows.append(
                {
                    "id": cid,
                    "label": clip.label.value,
                    "split": split,
                    "frames": clip.frame_count,
                    "duration_s": clip.duration_s,
                    "seed": clip.scenario_seed,
                }
            )
        doc = {
            "dataset": manifest.dataset_name,
            "split_seed": manifest.split_seed,
            "clips": rows,
        }
        validate_manifest(doc)
        with open(out / "manifest.json", "w") as f:
            json.dump(doc, f, separators=(",", ":"), sort_keys=True)
    except Exception as exc:
        for path in created:
            shutil.rmtree(path, ignore_errors=True)
        if isinstance(exc, ExportError):
            raise
        raise ExportError(f"export failed: {exc}") from exc

    summary = {
        "clips": len(rows),
        "frames": sum(r["frames"] for r in rows),
        "per_split": {s: sum(1 for r in rows if r["split"] == s) for s in SPLITS},
        "manifest": str(out / "manifest.json"),
    }
    return summary


# ---------------------------------------------------------------------------
# the stock recording suite

_VIOLENT_POOLS = (
    (Activity.CHASE,),
    (Activity.SHOOT,),
    (Activity.CHASE, Activity.SHOOT),
)
_NONVIOLENT_POOLS = (
    (Activity.TALK,),
    (Activity.WALK,),
    (Activity.DANCE,),
    (Activity.PHONE,),
    (Activity.TALK, Activity.WALK, Activity.DANCE, Activity.PHONE),
)


def default_scenario_suite(
    count: int = 240,
    clip_duration_s: float = MAX_CLIP_SECONDS,
    base_seed: int = 20240,
) -> list[ScenarioScript]:
    """The stock suite: ``count`` scripts split evenly between violent and
    non-violent compositions, cycling through activity pools."""
    if count % 2:
        raise InvalidParameterError("suite count must be even")
    scripts = []
    for i in range(count // 2):
        pool = _VIOLENT_POOLS[i % len(_VIOLENT_POOLS)]
        scripts.append(
            ScenarioScript(
                seed=base_seed + 2 * i,
                duration_s=clip_duration_s,
                groups=(
                    GroupSpec(size=6, scenario=Scenario.VIOLENT, activities=pool),
                    GroupSpec(size=4, scenario=Scenario.NON_VIOLENT,
                              activities=(Activity.WALK, Activity.TALK)),
                ),
            )
        )
        pool = _NONVIOLENT_POOLS[i % len(_NONVIOLENT_POOLS)]
        scripts.append(
            ScenarioScript(
                seed=base_seed + 2 * i + 1,
                duration_s=clip_duration_s,
                groups=(
                    GroupSpec(size=6, scenario=Scenario.NON_VIOLENT, activities=pool),
                    GroupSpec(size=4, scenario=Scenario.NON_VIOLENT,
                              activities=(Activity.WALK,)),
                ),
            )
        )
    return scripts


def default_single_script(
    seed: int, agents: int = 150, duration_s: float = MAX_CLIP_SECONDS,
    violent_fraction: float = 0.5,
) -> ScenarioScript:
    """One mixed-crowd script sized to ``agents``, for ad-hoc recordings."""
    rng = stream(seed, "script")
    cfg = SpawnConfig(total_agents=agents, violent_fraction=violent_fraction)
    from .behavior import _resolve_group_specs

    return ScenarioScript(
        seed=seed, duration_s=duration_s, groups=tuple(_resolve_group_specs(cfg, rng))
    )


def record_suite(
    scripts: list[ScenarioScript], out_dir: str | os.PathLike
) -> list[Clip]:
    return [record_clip(s, out_dir) for s in scripts]


def load_clips(staging_dir: str | os.PathLike) -> list[Clip]:
    """Recover Clip records from a recording directory tree."""
    clips = []
    for meta_path in sorted(Path(staging_dir).glob("*/clip.json")):
        with open(meta_path) as f:
            clips.append(Clip.from_meta(json.load(f), str(meta_path.parent)))
    return clips
