"""Procedural hexagonal-tile urban environments and their navigation graph.

Tiles live on an axial (q, r) grid with pointy-top orientation; the implicit
cube coordinate is s = -q - r. A generated world is a value: immutable after
construction, serialized canonically, and a pure function of
(seed, radius, tile_size, mix).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .rng import Rng, stream

SQRT3 = math.sqrt(3.0)

# Axial direction offsets, fixed order: E, NE, NW, W, SW, SE (pointy-top).
AXIAL_DIRECTIONS: tuple[tuple[int, int], ...] = (
    (1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1),
)


class InvalidParameterError(ValueError):
    """A generation or query parameter violates its precondition."""


class UnknownNodeError(KeyError):
    """A path endpoint is not a node of the navigation graph."""


class UnreachableError(RuntimeError):
    """No walkable path exists between the requested endpoints."""


@dataclass(frozen=True, order=True)
class HexCoord:
    q: int
    r: int

    @property
    def s(self) -> int:
        return -self.q - self.r


class TileKind(Enum):
    ROAD = "road"
    BUILDING = "building"
    PARK = "park"
    PLAZA = "plaza"


@dataclass(frozen=True)
class Tile:
    coord: HexCoord
    kind: TileKind
    building_height: float = 0.0

    def __post_init__(self) -> None:
        if (self.kind is TileKind.BUILDING) != (self.building_height > 0):
            raise InvalidParameterError(
                f"building_height {self.building_height} inconsistent with kind {self.kind}"
            )


@dataclass(frozen=True)
class TileMixConfig:
    """Fractions of each tile kind drawn during generation; must sum to 1."""

    road: float = 0.30
    building: float = 0.40
    park: float = 0.20
    plaza: float = 0.10

    def __post_init__(self) -> None:
        total = self.road + self.building + self.park + self.plaza
        if abs(total - 1.0) > 1e-9:
            raise InvalidParameterError(f"tile mix sums to {total}, expected 1.0")
        if min(self.road, self.building, self.park, self.plaza) < 0:
            raise InvalidParameterError("tile mix fractions must be non-negative")


DEFAULT_MIX = TileMixConfig()
DEFAULT_RADIUS = 8
DEFAULT_TILE_SIZE = 10.0

# Building heights are drawn uniformly from this range (meters).
BUILDING_HEIGHT_RANGE = (6.0, 24.0)


def neighbors(c: HexCoord) -> list[HexCoord]:
    """The six axial neighbors of ``c`` in the fixed direction order."""
    return [HexCoord(c.q + dq, c.r + dr) for dq, dr in AXIAL_DIRECTIONS]


def hex_distance(a: HexCoord, b: HexCoord) -> int:
    dq = a.q - b.q
    dr = a.r - b.r
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


def hex_to_world(c: HexCoord, tile_size: float) -> tuple[float, float]:
    """Center of hex ``c`` in meters (pointy-top layout)."""
    if tile_size <= 0:
        raise InvalidParameterError(f"tile_size must be positive, got {tile_size}")
    x = tile_size * SQRT3 * (c.q + c.r / 2.0)
    y = tile_size * 1.5 * c.r
    return x, y


def world_to_hex(x: float, y: float, tile_size: float) -> HexCoord:
    """Hex containing world point (x, y); inverse of :func:`hex_to_world`."""
    if tile_size <= 0:
        raise InvalidParameterError(f"tile_size must be positive, got {tile_size}")
    qf = (SQRT3 / 3.0 * x - y / 3.0) / tile_size
    rf = (2.0 / 3.0 * y) / tile_size
    return _cube_round(qf, rf)


def _cube_round(qf: float, rf: float) -> HexCoord:
    sf = -qf - rf
    q, r, s = round(qf), round(rf), round(sf)
    dq, dr, ds = abs(q - qf), abs(r - rf), abs(s - sf)
    if dq > dr and dq > ds:
        q = -r - s
    elif dr > ds:
        r = -q - s
    return HexCoord(int(q), int(r))


def hex_line(a: HexCoord, b: HexCoord) -> list[HexCoord]:
    """Hexes on the straight segment from a to b, endpoints included."""
    n = hex_distance(a, b)
    if n == 0:
        return [a]
    out = []
    for i in range(n + 1):
        t = i / n
        # epsilon nudge breaks rounding ties consistently
        qf = a.q + (b.q - a.q) * t + 1e-6
        rf = a.r + (b.r - a.r) * t + 1e-6
        out.append(_cube_round(qf, rf))
    return out


def disk_coords(radius: int) -> list[HexCoord]:
    """All coords with max(|q|,|r|,|s|) <= radius, sorted by (r, q)."""
    coords = []
    for r in range(-radius, radius + 1):
        q_lo = max(-radius, -r - radius)
        q_hi = min(radius, -r + radius)
        for q in range(q_lo, q_hi + 1):
            coords.append(HexCoord(q, r))
    return coords


@dataclass(frozen=True)
class NavGraph:
    """Walkable-tile adjacency; nodes are exactly the non-building tiles."""

    nodes: frozenset[HexCoord]
    edges: dict[HexCoord, tuple[HexCoord, ...]] = field(repr=False)

    @classmethod
    def from_walkable(cls, walkable: Iterable[HexCoord]) -> NavGraph:
        nodes = frozenset(walkable)
        edges = {
            c: tuple(n for n in neighbors(c) if n in nodes)
            for c in nodes
        }
        return cls(nodes=nodes, edges=edges)


@dataclass(frozen=True)
class World:
    seed: int
    radius: int
    tile_size: float
    tiles: dict[HexCoord, Tile] = field(repr=False)
    nav: NavGraph = field(repr=False)

    def tile_at(self, c: HexCoord) -> Tile | None:
        return self.tiles.get(c)

    def is_walkable(self, c: HexCoord) -> bool:
        t = self.tiles.get(c)
        return t is not None and t.kind is not TileKind.BUILDING

    def tile_at_point(self, x: float, y: float) -> Tile | None:
        return self.tiles.get(world_to_hex(x, y, self.tile_size))

    def to_json(self) -> str:
        """Canonical serialization: tiles sorted by (r, q) ascending."""
        tiles = [
            {"q": t.coord.q, "r": t.coord.r, "kind": t.kind.value,
             "height": t.building_height}
            for t in sorted(self.tiles.values(), key=lambda t: (t.coord.r, t.coord.q))
        ]
        doc = {"seed": self.seed, "radius": self.radius,
               "tile_size": self.tile_size, "tiles": tiles}
        return json.dumps(doc, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def world_from_json(text: str) -> World:
    doc = json.loads(text)
    tiles = {}
    for rec in doc["tiles"]:
        c = HexCoord(rec["q"], rec["r"])
        tiles[c] = Tile(coord=c, kind=TileKind(rec["kind"]), building_height=rec["height"])
    nav = NavGraph.from_walkable(c for c, t in tiles.items() if t.kind is not TileKind.BUILDING)
    return World(seed=doc["seed"], radius=doc["radius"], tile_size=doc["tile_size"],
                 tiles=tiles, nav=nav)


def _walkable_components(kinds: dict[HexCoord, TileKind]) -> list[set[HexCoord]]:
    components = []
    seen: set[HexCoord] = set()
    for c in sorted(kinds, key=lambda h: (h.r, h.q)):
        if c in seen or kinds[c] is TileKind.BUILDING:
            continue
        comp = {c}
        queue = deque([c])
        seen.add(c)
        while queue:
            cur = queue.popleft()
            for n in neighbors(cur):
                if n in kinds and n not in seen and kinds[n] is not TileKind.BUILDING:
                    seen.add(n)
                    comp.add(n)
                    queue.append(n)
        components.append(comp)
    return components


def _repair_connectivity(kinds: dict[HexCoord, TileKind]) -> None:
    """Carve roads through buildings until the walkable subgraph is connected.

    Repeatedly joins the component containing the center to its nearest other
    component: over all cross-component tile pairs, pick the pair with minimal
    hex distance (ties: lexicographically smallest (q, r, q, r) tuple) and
    convert every building tile on the hex line between them to road.
    """
    while True:
        components = _walkable_components(kinds)
        if len(components) <= 1:
            return
        center = HexCoord(0, 0)
        main = next(comp for comp in components if center in comp)
        rest = [comp for comp in components if comp is not main]
        best: tuple[int, int, int, int, int] | None = None
        best_pair: tuple[HexCoord, HexCoord] | None = None
        for comp in rest:
            for a in main:
                for b in comp:
                    key = (hex_distance(a, b), a.q, a.r, b.q, b.r)
                    if best is None or key < best:
                        best = key
                        best_pair = (a, b)
        assert best_pair is not None
        for c in hex_line(*best_pair):
            if kinds.get(c) is TileKind.BUILDING:
                kinds[c] = TileKind.ROAD


def generate_world(
    seed: int,
    radius: int = DEFAULT_RADIUS,
    tile_size: float = DEFAULT_TILE_SIZE,
    mix: TileMixConfig = DEFAULT_MIX,
) -> World:
    """Generate a deterministic urban hex world.

    Tile kinds are drawn from ``mix`` by the worldgen substream of ``seed``,
    then repaired so all non-building tiles form one connected component.
    The center tile is always a plaza.
    """
    if radius < 0:
        raise InvalidParameterError(f"radius must be non-negative, got {radius}")
    if tile_size <= 0:
        raise InvalidParameterError(f"tile_size must be positive, got {tile_size}")

    rng = stream(seed, "worldgen")
    coords = disk_coords(radius)

    thresholds = (
        (mix.road, TileKind.ROAD),
        (mix.road + mix.building, TileKind.BUILDING),
        (mix.road + mix.building + mix.park, TileKind.PARK),
    )
    kinds: dict[HexCoord, TileKind] = {}
    heights: dict[HexCoord, float] = {}
    for c in coords:
        if c == HexCoord(0, 0):
            kinds[c] = TileKind.PLAZA
            continue
        u = rng.random()
        kind = TileKind.PLAZA
        for cutoff, k in thresholds:
            if u < cutoff:
                kind = k
                break
        kinds[c] = kind
        if kind is TileKind.BUILDING:
            heights[c] = rng.uniform(*BUILDING_HEIGHT_RANGE)

    _repair_connectivity(kinds)

    tiles = {
        c: Tile(
            coord=c,
            kind=kinds[c],
            building_height=heights[c] if kinds[c] is TileKind.BUILDING else 0.0,
        )
        for c in coords
    }
    nav = NavGraph.from_walkable(c for c in coords if kinds[c] is not TileKind.BUILDING)
    return World(seed=seed, radius=radius, tile_size=tile_size, tiles=tiles, nav=nav)


def find_path(g: NavGraph, a: HexCoord, b: HexCoord) -> list[HexCoord]:
    """Shortest path (by edge count) from a to b, endpoints inclusive.

    Breadth-first search expanding neighbors in the fixed direction order, so
    equal-length ties resolve identically on every run.
    """
    if a not in g.nodes:
        raise UnknownNodeError(a)
    if b not in g.nodes:
        raise UnknownNodeError(b)
    if a == b:
        return [a]
    parent: dict[HexCoord, HexCoord] = {a: a}
    queue = deque([a])
    while queue:
        cur = queue.popleft()
        for n in g.edges[cur]:
            if n in parent:
                continue
            parent[n] = cur
            if n == b:
                path = [n]
                while path[-1] != a:
                    path.append(parent[path[-1]])
                path.reverse()
                return path
            queue.append(n)
    raise UnreachableError(f"no walkable path from {a} to {b}")
