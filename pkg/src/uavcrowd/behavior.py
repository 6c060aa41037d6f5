"""Finite-state crowd agents, groups, and the fixed-timestep simulation loop.

Agents tick against a snapshot of the previous state in ascending id order,
drawing from a single behavior substream, so a run is a pure function of
(world seed, spawn config) and replays bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .rng import Rng, stream
from .world import (
    HexCoord,
    InvalidParameterError,
    World,
    find_path,
    hex_to_world,
    world_to_hex,
)

WALK_SPEED = 1.4
CHASE_SPEED = 3.0
FLEE_SPEED = 4.0
AGENT_SPEED_MAX = 6.0

STRIKE_RANGE = 1.0
STRIKE_DURATION = 1.2
SHOOT_RANGE = 15.0
SHOT_PERIOD = 2.0
GUNSHOT_RADIUS = 30.0
FLEE_DURATION = 8.0
PERFORM_TIME_RANGE = (4.0, 10.0)
ANCHOR_RADIUS = 1.5
SPAWN_SPREAD = 5.0
AVOID_RADIUS = 0.6
NEARBY_RADIUS = 2.0
ARRIVE_EPS = 0.3

# Spawn capacity: agents per walkable tile before placement degenerates.
MAX_AGENTS_PER_WALKABLE_TILE = 8

CANONICAL_DT = 1.0 / 30.0


class CapacityError(RuntimeError):
    """The world has too little walkable area for the requested crowd."""


class Activity(Enum):
    PUNCH = "punch"
    KICK = "kick"
    SHOOT = "shoot"
    CHASE = "chase"
    TALK = "talk"
    WALK = "walk"
    DISPERSE = "disperse"
    DANCE = "dance"
    PHONE = "phone"


VIOLENT_ACTIVITIES = frozenset(
    {Activity.PUNCH, Activity.KICK, Activity.SHOOT, Activity.CHASE}
)
NONVIOLENT_ACTIVITIES = frozenset(
    {Activity.TALK, Activity.WALK, Activity.DISPERSE, Activity.DANCE, Activity.PHONE}
)


class Scenario(Enum):
    VIOLENT = "violent"
    NON_VIOLENT = "nonviolent"


def classify_scenario(act: Activity) -> Scenario:
    return Scenario.VIOLENT if act in VIOLENT_ACTIVITIES else Scenario.NON_VIOLENT


# Activities a freshly spawned or re-rolling agent may take up. Punch/Kick are
# reached only through a chase, and Disperse only as a gunshot reaction.
SPAWN_POOLS = {
    Scenario.VIOLENT: (Activity.CHASE, Activity.SHOOT),
    Scenario.NON_VIOLENT: (Activity.TALK, Activity.WALK, Activity.DANCE, Activity.PHONE),
}


class Phase(Enum):
    SEEKING = "seeking"
    APPROACHING = "approaching"
    PERFORMING = "performing"
    FLEEING = "fleeing"


class EventKind(Enum):
    GUNSHOT = "gunshot"
    SCENARIO_START = "scenario_start"
    SCENARIO_END = "scenario_end"


@dataclass(frozen=True)
class SimEvent:
    kind: EventKind
    origin: tuple[float, float]
    tick: int


@dataclass(frozen=True)
class BehaviorState:
    activity: Activity
    phase: Phase
    timer: float = 0.0


@dataclass(frozen=True)
class Agent:
    id: int
    group_id: int
    pos: tuple[float, float]
    heading: float
    speed: float
    state: BehaviorState
    # Chase/shoot target agent id, or the walk waypoint hex.
    target: int | HexCoord | None = None
    # Remaining walk path, hex centers to visit in order.
    path: tuple[HexCoord, ...] = ()


@dataclass(frozen=True)
class Group:
    id: int
    member_ids: tuple[int, ...]
    scenario: Scenario
    anchor: tuple[float, float]
    activities: tuple[Activity, ...]

    def __post_init__(self) -> None:
        if not 2 <= len(self.member_ids) <= 20:
            raise InvalidParameterError(
                f"group size {len(self.member_ids)} outside [2, 20]"
            )


@dataclass(frozen=True)
class GroupSpec:
    size: int
    scenario: Scenario
    activities: tuple[Activity, ...] | None = None


@dataclass(frozen=True)
class SpawnConfig:
    total_agents: int | None = None
    violent_fraction: float = 0.5
    groups: tuple[GroupSpec, ...] | None = None
    group_size_min: int = 2
    group_size_max: int = 8

    def __post_init__(self) -> None:
        if self.groups is None and self.total_agents is None:
            raise InvalidParameterError("need total_agents or explicit groups")
        if not 2 <= self.group_size_min <= self.group_size_max <= 20:
            raise InvalidParameterError("group size bounds must satisfy 2 <= min <= max <= 20")


@dataclass(frozen=True)
class AgentView:
    id: int
    group_id: int
    pos: tuple[float, float]


@dataclass(frozen=True)
class Neighborhood:
    """Per-agent slice of the previous-tick snapshot."""

    world: World
    group: Group
    tick: int
    nearby: tuple[AgentView, ...] = ()
    nearest_other: AgentView | None = None
    target: AgentView | None = None


@dataclass(frozen=True)
class SimState:
    world: World
    groups: tuple[Group, ...]
    agents: tuple[Agent, ...]
    tick: int = 0
    events: tuple[SimEvent, ...] = ()
    rng_state: int = 0

    @classmethod
    def create(cls, world: World, cfg: SpawnConfig) -> SimState:
        groups, agents = spawn_groups(world, stream(world.seed, "spawning"), cfg)
        return cls(
            world=world,
            groups=groups,
            agents=agents,
            tick=0,
            events=(SimEvent(EventKind.SCENARIO_START, (0.0, 0.0), 0),),
            rng_state=stream(world.seed, "behavior").state,
        )

    def group_of(self, a: Agent) -> Group:
        return self.groups[a.group_id]

    def serialize(self) -> dict:
        return {
            "tick": self.tick,
            "agents": [
                {
                    "id": a.id,
                    "group": a.group_id,
                    "pos": [a.pos[0], a.pos[1]],
                    "heading": a.heading,
                    "speed": a.speed,
                    "activity": a.state.activity.value,
                    "phase": a.state.phase.value,
                    "timer": a.state.timer,
                }
                for a in self.agents
            ],
            "events": [
                {"kind": e.kind.value, "origin": list(e.origin), "tick": e.tick}
                for e in self.events
            ],
        }

    def state_hash(self) -> str:
        doc = json.dumps(self.serialize(), separators=(",", ":"))
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def _resolve_group_specs(cfg: SpawnConfig, rng: Rng) -> list[GroupSpec]:
    if cfg.groups is not None:
        if not cfg.groups:
            raise InvalidParameterError("explicit group list is empty")
        return list(cfg.groups)
    total = cfg.total_agents
    if total is None or total < 2:
        raise InvalidParameterError(f"total_agents must be >= 2, got {total}")
    lo, hi = cfg.group_size_min, cfg.group_size_max
    sizes: list[int] = []
    remaining = total
    while remaining > 0:
        valid = [s for s in range(lo, min(hi, remaining) + 1)
                 if remaining - s == 0 or remaining - s >= lo]
        sizes.append(valid[rng.randrange(len(valid))])
        remaining -= sizes[-1]
    n_violent = int(len(sizes) * cfg.violent_fraction + 0.5)
    scenarios = [Scenario.VIOLENT] * n_violent + [Scenario.NON_VIOLENT] * (len(sizes) - n_violent)
    rng.shuffle(scenarios)
    return [GroupSpec(size=s, scenario=sc) for s, sc in zip(sizes, scenarios)]


def spawn_groups(
    world: World, rng: Rng, cfg: SpawnConfig
) -> tuple[tuple[Group, ...], tuple[Agent, ...]]:
    """Place groups on walkable tiles; members scatter within 5 m of their
    group anchor. Deterministic in (world.seed, cfg) when ``rng`` is the
    spawning substream of the world seed."""
    specs = _resolve_group_specs(cfg, rng)
    total = sum(s.size for s in specs)
    walkable = sorted(world.nav.nodes, key=lambda c: (c.r, c.q))
    if not walkable:
        raise CapacityError("world has no walkable tiles")
    if total > MAX_AGENTS_PER_WALKABLE_TILE * len(walkable):
        raise CapacityError(
            f"{total} agents exceed capacity of {len(walkable)} walkable tiles"
        )

    anchors = list(walkable)
    rng.shuffle(anchors)

    groups: list[Group] = []
    agents: list[Agent] = []
    next_id = 0
    for gi, spec in enumerate(specs):
        if not 2 <= spec.size <= 20:
            raise InvalidParameterError(f"group size {spec.size} outside [2, 20]")
        anchor_tile = anchors[gi % len(anchors)]
        ax, ay = hex_to_world(anchor_tile, world.tile_size)
        pool = spec.activities or SPAWN_POOLS[spec.scenario]
        member_ids = []
        for _ in range(spec.size):
            px, py = ax, ay
            for _attempt in range(20):
                rho = SPAWN_SPREAD * math.sqrt(rng.random())
                phi = rng.uniform(0.0, 2.0 * math.pi)
                cx, cy = ax + rho * math.cos(phi), ay + rho * math.sin(phi)
                if world.is_walkable(world_to_hex(cx, cy, world.tile_size)):
                    px, py = cx, cy
                    break
            agents.append(
                Agent(
                    id=next_id,
                    group_id=gi,
                    pos=(px, py),
                    heading=rng.uniform(0.0, 2.0 * math.pi),
                    speed=0.0,
                    state=BehaviorState(rng.choice(pool), Phase.SEEKING, 0.0),
                )
            )
            member_ids.append(next_id)
            next_id += 1
        groups.append(
            Group(
                id=gi,
                member_ids=tuple(member_ids),
                scenario=spec.scenario,
                anchor=(ax, ay),
                activities=pool,
            )
        )
    return tuple(groups), tuple(agents)


def _nearest_gunshot(
    pos: tuple[float, float], events: tuple[SimEvent, ...]
) -> SimEvent | None:
    best = None
    best_d2 = GUNSHOT_RADIUS * GUNSHOT_RADIUS
    for e in events:
        if e.kind is not EventKind.GUNSHOT:
            continue
        dx, dy = pos[0] - e.origin[0], pos[1] - e.origin[1]
        d2 = dx * dx + dy * dy
        if d2 <= best_d2:
            # strict < keeps the earliest event on exact ties
            if best is None or d2 < best_d2:
                best, best_d2 = e, d2
    return best


def _toward(frm: tuple[float, float], to: tuple[float, float]) -> tuple[float, float] | None:
    dx, dy = to[0] - frm[0], to[1] - frm[1]
    n = math.hypot(dx, dy)
    if n < 1e-9:
        return None
    return dx / n, dy / n


def _pick_walk_target(
    pos: tuple[float, float], world: World, rng: Rng
) -> tuple[HexCoord | None, tuple[HexCoord, ...]]:
    nodes = sorted(world.nav.nodes, key=lambda c: (c.r, c.q))
    goal = nodes[rng.randrange(len(nodes))]
    here = world_to_hex(pos[0], pos[1], world.tile_size)
    if here not in world.nav.nodes:
        return goal, (goal,)
    return goal, tuple(find_path(world.nav, here, goal))


def _avoided_direction(
    desired: tuple[float, float], a: Agent, nearby: tuple[AgentView, ...]
) -> tuple[float, float]:
    rx, ry = 0.0, 0.0
    for other in nearby:
        dx, dy = a.pos[0] - other.pos[0], a.pos[1] - other.pos[1]
        d = math.hypot(dx, dy)
        if d < 1e-9 or d >= AVOID_RADIUS:
            continue
        w = 1.5 * (AVOID_RADIUS - d) / (AVOID_RADIUS * d)
        rx += dx * w
        ry += dy * w
    cx, cy = desired[0] + rx, desired[1] + ry
    n = math.hypot(cx, cy)
    if n < 1e-9:
        return desired
    return cx / n, cy / n

# Fallback sweep when the straight step would enter a building tile.
_STEER_OFFSETS = (0.0, math.pi / 6, -math.pi / 6, math.pi / 3, -math.pi / 3,
                  math.pi / 2, -math.pi / 2)


def _move(
    pos: tuple[float, float],
    direction: tuple[float, float],
    speed: float,
    dt: float,
    world: World,
    allow_steer: bool,
) -> tuple[tuple[float, float], float | None]:
    """Integrate one step along ``direction`` at ``speed``, steering around
    building tiles. Returns (new_pos, heading) or (pos, None) if blocked."""
    base = math.atan2(direction[1], direction[0])
    offsets = _STEER_OFFSETS if allow_steer else (0.0,)
    for off in offsets:
        h = base + off
        nx = pos[0] + speed * dt * math.cos(h)
        ny = pos[1] + speed * dt * math.sin(h)
        if world.is_walkable(world_to_hex(nx, ny, world.tile_size)):
            return (nx, ny), h
    return pos, None


def tick_agent(
    a: Agent,
    perception: Neighborhood,
    events: tuple[SimEvent, ...],
    dt: float,
    rng: Rng,
) -> tuple[Agent, tuple[SimEvent, ...]]:
    """Advance one agent by one step: apply the transition table, then
    integrate motion with local avoidance.

    Also returns any events the agent emitted (gunshots) so the caller can
    append them to the log.
    """
    if dt <= 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")

    world = perception.world
    group = perception.group
    state = a.state
    target = a.target
    path = a.path
    heading = a.heading
    speed = 0.0
    desired: tuple[float, float] | None = None
    heading_locked = False
    emitted: list[SimEvent] = []

    shot = None
    if group.scenario is Scenario.NON_VIOLENT:
        shot = _nearest_gunshot(a.pos, events)

    if shot is not None:
        heading = math.atan2(a.pos[1] - shot.origin[1], a.pos[0] - shot.origin[0])
        state = BehaviorState(Activity.DISPERSE, Phase.FLEEING, FLEE_DURATION)
        target, path = None, ()
        speed = FLEE_SPEED
        desired = (math.cos(heading), math.sin(heading))
        heading_locked = True

    elif state.activity is Activity.DISPERSE:
        timer = state.timer - dt
        if timer <= 0:
            state = BehaviorState(Activity.WALK, Phase.SEEKING, 0.0)
        else:
            state = replace(state, timer=timer)
            speed = FLEE_SPEED
            desired = (math.cos(heading), math.sin(heading))

    elif state.activity is Activity.WALK:
        if not path:
            _goal, path = _pick_walk_target(a.pos, world, rng)
            target = _goal
            state = BehaviorState(Activity.WALK, Phase.PERFORMING, 0.0)
        node_xy = hex_to_world(path[0], world.tile_size)
        while math.hypot(node_xy[0] - a.pos[0], node_xy[1] - a.pos[1]) <= ARRIVE_EPS:
            path = path[1:]
            if not path:
                # arrived: a fresh waypoint is chosen next tick
                state = BehaviorState(Activity.WALK, Phase.SEEKING, 0.0)
                target = None
                break
            node_xy = hex_to_world(path[0], world.tile_size)
        if path:
            desired = _toward(a.pos, node_xy)
            speed = WALK_SPEED if desired else 0.0

    elif state.activity in (Activity.TALK, Activity.PHONE, Activity.DANCE):
        dist = math.hypot(a.pos[0] - group.anchor[0], a.pos[1] - group.anchor[1])
        if state.phase is Phase.PERFORMING:
            timer = state.timer - dt
            if timer <= 0:
                state = BehaviorState(rng.choice(group.activities), Phase.SEEKING, 0.0)
            else:
                state = replace(state, timer=timer)
        elif dist <= ANCHOR_RADIUS:
            state = BehaviorState(
                state.activity, Phase.PERFORMING, rng.uniform(*PERFORM_TIME_RANGE)
            )
        else:
            state = replace(state, phase=Phase.APPROACHING)
            desired = _toward(a.pos, group.anchor)
            speed = WALK_SPEED if desired else 0.0

    elif state.activity is Activity.CHASE:
        view = perception.target
        if state.phase is Phase.SEEKING or view is None:
            view = perception.nearest_other
            target = view.id if view else None
            state = replace(state, phase=Phase.APPROACHING if view else Phase.SEEKING)
        if view is not None:
            dist = math.hypot(view.pos[0] - a.pos[0], view.pos[1] - a.pos[1])
            if dist < STRIKE_RANGE:
                strike = Activity.PUNCH if rng.random() < 0.5 else Activity.KICK
                state = BehaviorState(strike, Phase.PERFORMING, STRIKE_DURATION)
            else:
                desired = _toward(a.pos, view.pos)
                speed = CHASE_SPEED if desired else 0.0

    elif state.activity in (Activity.PUNCH, Activity.KICK):
        timer = state.timer - dt
        if timer <= 0:
            state = BehaviorState(Activity.CHASE, Phase.SEEKING, 0.0)
            target = None
        else:
            state = replace(state, timer=timer)

    elif state.activity is Activity.SHOOT:
        view = perception.target
        if state.phase is Phase.SEEKING or view is None:
            view = perception.nearest_other
            target = view.id if view else None
            state = replace(state, phase=Phase.APPROACHING if view else Phase.SEEKING)
        if view is not None:
            dist = math.hypot(view.pos[0] - a.pos[0], view.pos[1] - a.pos[1])
            if state.phase is Phase.PERFORMING:
                if dist > SHOOT_RANGE:
                    state = replace(state, phase=Phase.APPROACHING)
                    desired = _toward(a.pos, view.pos)
                    speed = CHASE_SPEED if desired else 0.0
                else:
                    timer = state.timer - dt
                    if timer <= 0:
                        emitted.append(
                            SimEvent(EventKind.GUNSHOT, a.pos, perception.tick)
                        )
                        timer += SHOT_PERIOD
                    state = replace(state, timer=timer)
            elif dist <= SHOOT_RANGE:
                state = BehaviorState(Activity.SHOOT, Phase.PERFORMING, SHOT_PERIOD)
                emitted.append(SimEvent(EventKind.GUNSHOT, a.pos, perception.tick))
            else:
                desired = _toward(a.pos, view.pos)
                speed = CHASE_SPEED if desired else 0.0

    pos = a.pos
    if desired is not None and speed > 0:
        if not heading_locked:
            desired = _avoided_direction(desired, a, perception.nearby)
        pos, moved_heading = _move(
            pos, desired, speed, dt, world, allow_steer=not heading_locked
        )
        if moved_heading is not None and not heading_locked:
            heading = moved_heading
        if moved_heading is None:
            speed = 0.0

    return (
        replace(a, pos=pos, heading=heading, speed=speed, state=state,
                target=target, path=path),
        tuple(emitted),
    )


def step(sim: SimState, dt: float = CANONICAL_DT) -> SimState:
    """Advance every agent one fixed step (ascending id order) against a
    snapshot of the current state, append emitted events, bump the tick."""
    if dt <= 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if not sim.agents:
        return replace(sim, tick=sim.tick + 1)

    # events emitted during the previous step become audible now
    recent = []
    for e in reversed(sim.events):
        if e.tick < sim.tick - 1:
            break
        if e.tick == sim.tick - 1:
            recent.append(e)
    recent_events = tuple(reversed(recent))

    agents = sim.agents
    n = len(agents)
    pos = np.array([a.pos for a in agents], dtype=np.float64)
    gid = np.array([a.group_id for a in agents])
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    far = np.float64(1e18)
    d2_other = d2 + far * (gid[:, None] == gid[None, :])
    nearest_idx = np.argmin(d2_other, axis=1)
    nearby_mask = d2 < NEARBY_RADIUS * NEARBY_RADIUS
    np.fill_diagonal(nearby_mask, False)

    views = [AgentView(a.id, a.group_id, a.pos) for a in agents]
    index_of = {a.id: i for i, a in enumerate(agents)}

    rng = Rng.from_state(sim.rng_state)
    new_agents: list[Agent] = []
    emitted: list[SimEvent] = []
    for i, a in enumerate(agents):
        nearest = (
            views[nearest_idx[i]] if d2_other[i, nearest_idx[i]] < far else None
        )
        target_view = None
        if isinstance(a.target, int):
            j = index_of.get(a.target)
            if j is not None:
                target_view = views[j]
        percep = Neighborhood(
            world=sim.world,
            group=sim.groups[a.group_id],
            tick=sim.tick,
            nearby=tuple(views[j] for j in np.nonzero(nearby_mask[i])[0]),
            nearest_other=nearest,
            target=target_view,
        )
        na, ev = tick_agent(a, percep, recent_events, dt, rng)
        new_agents.append(na)
        emitted.extend(ev)

    events = sim.events + tuple(emitted) if emitted else sim.events
    return replace(
        sim,
        agents=tuple(new_agents),
        tick=sim.tick + 1,
        events=events,
        rng_state=rng.state,
    )
