"""Headless software renderer: synchronized RGB, semantic-segmentation and
depth passes from the UAV camera.

One z-buffered rasterization produces a class/depth/shade buffer triple from
which every pass is derived, so the passes are consistent by construction:
a pixel is agent-colored in the segmentation exactly when the nearest surface
in the z-buffer is an agent capsule.

Rendering is a pure function of (SimState, World, UavState, intrinsics).
An internal cache keyed on (world identity, pose, intrinsics) reuses the
static scene (ground + buildings) between frames; cached buffers are copied
before agents are composited, so results are bit-identical with or without
cache hits.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .behavior import SimState
from .camera import CameraIntrinsics, UavState, camera_basis
from .world import SQRT3, TileKind, World

NEAR_CLIP = 0.05

AGENT_HEIGHT = 1.8
AGENT_RADIUS = 0.3
# Capsule axis endpoints (sphere centers) sit radius away from the extremes.
_AXIS_LO = AGENT_RADIUS
_AXIS_HI = AGENT_HEIGHT - AGENT_RADIUS

# Surface class ids used in the raster buffers.
CLS_SKY = 0
CLS_GROUND = 1
CLS_ROAD = 2
CLS_BUILDING = 3
CLS_AGENT = 4

_SUN = np.array([0.4, 0.3, 0.866])
_SUN = _SUN / np.linalg.norm(_SUN)
_AMBIENT = 0.35
_FULL_SHADE = 255  # shade is stored as a quantized 8-bit lambert level

DEPTH_BEYOND = 65535  # sky / out of range, millimeters


class RenderPass(Enum):
    RGB = "rgb"
    SEGMENTATION = "segmentation"
    DEPTH = "depth"


class InvalidInputError(ValueError):
    """An image of the wrong pass was supplied."""


@dataclass(frozen=True)
class SegPalette:
    agent: tuple[int, int, int] = (81, 13, 36)
    ground: tuple[int, int, int] = (0, 0, 0)
    building: tuple[int, int, int] = (70, 70, 70)
    road: tuple[int, int, int] = (128, 64, 128)
    sky: tuple[int, int, int] = (135, 206, 235)

    def by_class(self) -> np.ndarray:
        """uint8 lookup table indexed by surface class id."""
        return np.array(
            [self.sky, self.ground, self.road, self.building, self.agent],
            dtype=np.uint8,
        )


PALETTE = SegPalette()
_PALETTE_LUT = PALETTE.by_class()
PALETTE_COLORS = {tuple(int(v) for v in row) for row in _PALETTE_LUT}

# RGB pass = base palette color at a lambert shade level; precomputing the
# (class, level) table makes extraction a single gather
_levels = np.arange(256, dtype=np.float64) / 255.0
_lit = _AMBIENT + (1.0 - _AMBIENT) * _levels
_RGB_TABLE = np.floor(
    _PALETTE_LUT[:, None, :].astype(np.float64) * _lit[None, :, None] + 0.5
).astype(np.uint8)


def _shade_level(lambert: float) -> int:
    return int(min(255, max(0, math.floor(lambert * 255.0 + 0.5))))


_GROUND_SHADE = _shade_level(float(_SUN[2]))


@dataclass(frozen=True)
class Image:
    width: int
    height: int
    render_pass: RenderPass
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        p = self.pixels
        if self.render_pass is RenderPass.DEPTH:
            ok = p.shape == (self.height, self.width) and p.dtype == np.uint16
        else:
            ok = p.shape == (self.height, self.width, 3) and p.dtype == np.uint8
        if not ok:
            raise InvalidInputError(
                f"{self.render_pass.value} buffer has shape {p.shape} dtype {p.dtype}"
            )


@dataclass(frozen=True)
class FrameSet:
    tick: int
    uav: UavState
    rgb: Image
    seg: Image
    depth: Image


@dataclass
class _Buffers:
    depth: np.ndarray  # float64 meters, inf = sky
    cls: np.ndarray    # uint8 class ids
    shade: np.ndarray  # uint8 quantized lambert level, 255 = fully lit

    def copy(self) -> _Buffers:
        return _Buffers(self.depth.copy(), self.cls.copy(), self.shade.copy())


# ---------------------------------------------------------------------------
# cached per-intrinsics pixel-ray grids and per-world geometry

_grid_lock = threading.Lock()
_grid_cache: dict[tuple, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _pixel_grid(k: CameraIntrinsics):
    key = (k.width, k.height, k.fx, k.fy, k.cx, k.cy)
    with _grid_lock:
        hit = _grid_cache.get(key)
        if hit is None:
            gx = ((np.arange(k.width, dtype=np.float64) - k.cx) / k.fx)[None, :]
            gy = ((np.arange(k.height, dtype=np.float64) - k.cy) / k.fy)[:, None]
            gx, gy = np.broadcast_arrays(gx, gy)
            norm = np.sqrt(gx * gx + gy * gy + 1.0)
            hit = (np.ascontiguousarray(gx), np.ascontiguousarray(gy), norm)
            _grid_cache[key] = hit
    return hit


_world_lock = threading.Lock()
_world_cache: list[tuple[World, dict]] = []


def _world_geometry(world: World) -> dict:
    with _world_lock:
        for w, geo in _world_cache:
            if w is world:
                return geo
    r = world.radius
    kind_map = np.full((2 * r + 1, 2 * r + 1), CLS_GROUND, dtype=np.uint8)
    prisms = []
    for tile in sorted(world.tiles.values(), key=lambda t: (t.coord.r, t.coord.q)):
        q, rr = tile.coord.q, tile.coord.r
        if tile.kind is TileKind.ROAD:
            kind_map[q + r, rr + r] = CLS_ROAD
        if tile.kind is TileKind.BUILDING:
            prisms.append(_build_prism(world, tile))
    geo = {"kind_map": kind_map, "prisms": prisms}
    with _world_lock:
        _world_cache.append((world, geo))
        del _world_cache[:-8]
    return geo


def _build_prism(world: World, tile) -> dict:
    s = world.tile_size
    cx = s * SQRT3 * (tile.coord.q + tile.coord.r / 2.0)
    cy = s * 1.5 * tile.coord.r
    h = tile.building_height
    corners = np.array(
        [
            (cx + s * math.cos(math.radians(60 * i - 30)),
             cy + s * math.sin(math.radians(60 * i - 30)))
            for i in range(6)
        ]
    )
    top = np.column_stack([corners, np.full(6, h)])
    bot = np.column_stack([corners, np.zeros(6)])
    faces = []  # (v0, v1, v2, normal) in world space
    for i in range(1, 5):  # roof fan
        faces.append((top[0], top[i], top[i + 1], np.array([0.0, 0.0, 1.0])))
    for i in range(6):
        j = (i + 1) % 6
        mid = (corners[i] + corners[j]) / 2.0
        n = np.array([mid[0] - cx, mid[1] - cy, 0.0])
        n /= np.linalg.norm(n)
        faces.append((bot[i], bot[j], top[j], n))
        faces.append((bot[i], top[j], top[i], n))
    shades = [_shade_level(max(0.0, float(n @ _SUN))) for *_xyz, n in faces]
    return {
        "center": np.array([cx, cy, h / 2.0]),
        "bound": math.sqrt(s * s + (h / 2.0) ** 2),
        "height": h,
        "faces": faces,
        "shades": shades,
        "face_centers": [(v0 + v1 + v2) / 3.0 for v0, v1, v2, _n in faces],
    }


# ---------------------------------------------------------------------------
# rasterization

_ground_lock = threading.Lock()
_ground_cache: dict[tuple, dict] = {}


def _ground_base(k: CameraIntrinsics, yaw: float, pitch: float, z: float, tile_size: float) -> dict:
    """Translation-invariant part of the ground intersection: for fixed
    orientation and altitude, ray hit depths and hit offsets relative to the
    camera's ground position never change. Cached per (intrinsics, yaw,
    pitch, altitude, tile size)."""
    key = (k.width, k.height, k.fx, k.fy, k.cx, k.cy, yaw, pitch, z, tile_size)
    with _ground_lock:
        hit = _ground_cache.get(key)
    if hit is not None:
        return hit
    gx, gy, norm = _pixel_grid(k)
    right, down, forward = (np.array(v) for v in camera_basis(UavState(pos=(0.0, 0.0, max(z, 1.0)), yaw=yaw, pitch=pitch)))
    dx = gx * right[0] + gy * down[0] + forward[0]
    dy = gx * right[1] + gy * down[1] + forward[1]
    dz = gx * right[2] + gy * down[2] + forward[2]
    hits = dz < -1e-12
    t = np.where(hits, -z / np.where(hits, dz, -1.0), 0.0)
    depth = np.where(hits, t * norm, np.inf)
    # axial coordinates of the hit offsets, in units of tile_size; the camera
    # ground position contributes a per-frame scalar shift
    ox = t * dx
    oy = t * dy
    base = {
        "hits": hits,
        "depth": depth,
        "qf": (SQRT3 / 3.0 * ox - oy / 3.0) / tile_size,
        "rf": (2.0 / 3.0 * oy) / tile_size,
    }
    with _ground_lock:
        _ground_cache[key] = base
        while len(_ground_cache) > 8:
            _ground_cache.pop(next(iter(_ground_cache)))
    return base


def _ground_pass(world: World, u: UavState, k: CameraIntrinsics) -> _Buffers:
    base = _ground_base(k, u.yaw, u.pitch, u.pos[2], world.tile_size)
    hits = base["hits"]
    depth = base["depth"].copy()
    cls = np.full(hits.shape, CLS_SKY, dtype=np.uint8)
    shade = np.full(hits.shape, _FULL_SHADE, dtype=np.uint8)

    if hits.any():
        q_shift = (SQRT3 / 3.0 * u.pos[0] - u.pos[1] / 3.0) / world.tile_size
        r_shift = (2.0 / 3.0 * u.pos[1]) / world.tile_size
        qi, ri = _cube_round_arrays(base["qf"] + q_shift, base["rf"] + r_shift)
        r = world.radius
        inside = (
            (np.abs(qi) <= r) & (np.abs(ri) <= r) & (np.abs(qi + ri) <= r) & hits
        )
        kind_map = _world_geometry(world)["kind_map"]
        ground_cls = np.full(hits.shape, CLS_GROUND, dtype=np.uint8)
        ground_cls[inside] = kind_map[qi[inside] + r, ri[inside] + r]
        cls[hits] = ground_cls[hits]
        shade[hits] = np.uint8(_GROUND_SHADE)
    return _Buffers(depth, cls, shade)


def _cube_round_arrays(qf: np.ndarray, rf: np.ndarray):
    sf = -qf - rf
    q = np.round(qf)
    r = np.round(rf)
    s = np.round(sf)
    dq = np.abs(q - qf)
    dr = np.abs(r - rf)
    ds = np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(np.int64), r.astype(np.int64)


def _frustum_planes(k: CameraIntrinsics) -> np.ndarray:
    planes = np.array(
        [
            (1.0, 0.0, k.cx / k.fx),
            (-1.0, 0.0, (k.width - 1 - k.cx) / k.fx),
            (0.0, 1.0, k.cy / k.fy),
            (0.0, -1.0, (k.height - 1 - k.cy) / k.fy),
        ]
    )
    return planes / np.linalg.norm(planes, axis=1, keepdims=True)


def _raster_buildings(bufs: _Buffers, world: World, u: UavState, k: CameraIntrinsics) -> None:
    geo = _world_geometry(world)
    if not geo["prisms"]:
        return
    right, down, forward = (np.array(v) for v in camera_basis(u))
    rot = np.stack([right, down, forward])  # world -> camera rows
    cam = np.array(u.pos)
    planes = _frustum_planes(k)
    for prism in geo["prisms"]:
        c = rot @ (prism["center"] - cam)
        rad = prism["bound"]
        if c[2] + rad <= NEAR_CLIP:
            continue
        if np.any(planes @ c < -rad):
            continue
        for (v0, v1, v2, _n), shade, fc in zip(
            prism["faces"], prism["shades"], prism["face_centers"]
        ):
            if _n @ (cam - fc) <= 0.0:  # backface
                continue
            tri = rot @ np.column_stack([v0 - cam, v1 - cam, v2 - cam])
            for clipped in _clip_near(tri.T):
                _raster_triangle(bufs, clipped, CLS_BUILDING, shade, k)


def _clip_near(tri: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against the near
    plane; returns a fan of 0..2 triangles."""
    if np.all(tri[:, 2] > NEAR_CLIP):
        return [tri]
    out = []
    for i in range(3):
        a, b = tri[i], tri[(i + 1) % 3]
        a_in, b_in = a[2] > NEAR_CLIP, b[2] > NEAR_CLIP
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (NEAR_CLIP - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    if len(out) < 3:
        return []
    return [np.stack([out[0], out[i], out[i + 1]]) for i in range(1, len(out) - 1)]


def _raster_triangle(
    bufs: _Buffers, tri: np.ndarray, cls_id: int, shade: float, k: CameraIntrinsics
) -> None:
    z = tri[:, 2]
    w = 1.0 / z
    us = k.fx * tri[:, 0] * w + k.cx
    vs = k.fy * tri[:, 1] * w + k.cy
    x0 = max(0, int(math.ceil(us.min())))
    x1 = min(k.width - 1, int(math.floor(us.max())))
    y0 = max(0, int(math.ceil(vs.min())))
    y1 = min(k.height - 1, int(math.floor(vs.max())))
    if x0 > x1 or y0 > y1:
        return
    area = (us[1] - us[0]) * (vs[2] - vs[0]) - (us[2] - us[0]) * (vs[1] - vs[0])
    if abs(area) < 1e-12:
        return
    px = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
    py = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
    l0 = ((vs[1] - vs[2]) * (px - us[2]) + (us[2] - us[1]) * (py - vs[2])) / area
    l1 = ((vs[2] - vs[0]) * (px - us[2]) + (us[0] - us[2]) * (py - vs[2])) / area
    l2 = 1.0 - l0 - l1
    inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
    if not inside.any():
        return
    wp = l0 * w[0] + l1 * w[1] + l2 * w[2]
    pcx = (l0 * (tri[0, 0] * w[0]) + l1 * (tri[1, 0] * w[1]) + l2 * (tri[2, 0] * w[2])) / wp
    pcy = (l0 * (tri[0, 1] * w[0]) + l1 * (tri[1, 1] * w[1]) + l2 * (tri[2, 1] * w[2])) / wp
    pcz = 1.0 / wp
    dist = np.sqrt(pcx * pcx + pcy * pcy + pcz * pcz)
    region = (slice(y0, y1 + 1), slice(x0, x1 + 1))
    win = inside & (dist < bufs.depth[region])
    if not win.any():
        return
    bufs.depth[region][win] = dist[win]
    bufs.cls[region][win] = cls_id
    bufs.shade[region][win] = np.uint8(shade)


def _composite_agents(bufs: _Buffers, sim: SimState, u: UavState, k: CameraIntrinsics) -> None:
    if not sim.agents:
        return
    right, down, forward = (np.array(v) for v in camera_basis(u))
    rot = np.stack([right, down, forward])
    cam = np.array(u.pos)
    for a in sim.agents:
        lo = rot @ (np.array([a.pos[0], a.pos[1], _AXIS_LO]) - cam)
        hi = rot @ (np.array([a.pos[0], a.pos[1], _AXIS_HI]) - cam)
        if lo[2] <= NEAR_CLIP or hi[2] <= NEAR_CLIP:
            continue
        u_lo = (k.fx * lo[0] / lo[2] + k.cx, k.fy * lo[1] / lo[2] + k.cy)
        u_hi = (k.fx * hi[0] / hi[2] + k.cx, k.fy * hi[1] / hi[2] + k.cy)
        r_lo = k.fx * AGENT_RADIUS / lo[2]
        r_hi = k.fx * AGENT_RADIUS / hi[2]
        x0 = max(0, int(math.floor(min(u_lo[0] - r_lo, u_hi[0] - r_hi))))
        x1 = min(k.width - 1, int(math.ceil(max(u_lo[0] + r_lo, u_hi[0] + r_hi))))
        y0 = max(0, int(math.floor(min(u_lo[1] - r_lo, u_hi[1] - r_hi))))
        y1 = min(k.height - 1, int(math.ceil(max(u_lo[1] + r_lo, u_hi[1] + r_hi))))
        if x0 > x1 or y0 > y1:
            continue
        d_lo = float(np.linalg.norm(lo))
        d_hi = float(np.linalg.norm(hi))
        px = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
        py = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
        ax, ay = u_hi[0] - u_lo[0], u_hi[1] - u_lo[1]
        seg_len2 = ax * ax + ay * ay
        if seg_len2 < 1e-12:
            t = np.zeros(np.broadcast_shapes(px.shape, py.shape))
        else:
            t = np.clip(((px - u_lo[0]) * ax + (py - u_lo[1]) * ay) / seg_len2, 0.0, 1.0)
        qx = u_lo[0] + t * ax - px
        qy = u_lo[1] + t * ay - py
        rad = r_lo + (r_hi - r_lo) * t
        inside = qx * qx + qy * qy <= rad * rad
        if not inside.any():
            continue
        dist = d_lo + (d_hi - d_lo) * t
        region = (slice(y0, y1 + 1), slice(x0, x1 + 1))
        win = inside & (dist < bufs.depth[region])
        if not win.any():
            continue
        bufs.depth[region][win] = dist[win]
        bufs.cls[region][win] = CLS_AGENT
        bufs.shade[region][win] = np.uint8(_FULL_SHADE)


# ---------------------------------------------------------------------------
# static-scene cache + public API

_scene_lock = threading.Lock()
_scene_cache: list[tuple[World, tuple, CameraIntrinsics, _Buffers]] = []


def _static_scene(world: World, u: UavState, k: CameraIntrinsics) -> _Buffers:
    pose = (u.pos, u.yaw, u.pitch)
    with _scene_lock:
        for i, (w, p, ki, bufs) in enumerate(_scene_cache):
            if w is world and p == pose and ki == k:
                if i:
                    _scene_cache.insert(0, _scene_cache.pop(i))
                return bufs
    bufs = _ground_pass(world, u, k)
    _raster_buildings(bufs, world, u, k)
    with _scene_lock:
        _scene_cache.insert(0, (world, pose, k, bufs))
        del _scene_cache[4:]
    return bufs


def _rasterize(sim: SimState, world: World, u: UavState, k: CameraIntrinsics) -> _Buffers:
    bufs = _static_scene(world, u, k).copy()
    _composite_agents(bufs, sim, u, k)
    return bufs


def _extract(bufs: _Buffers, render_pass: RenderPass, k: CameraIntrinsics) -> Image:
    if render_pass is RenderPass.SEGMENTATION:
        pixels = _PALETTE_LUT[bufs.cls]
    elif render_pass is RenderPass.DEPTH:
        mm = np.where(
            np.isfinite(bufs.depth),
            np.minimum(np.floor(bufs.depth * 1000.0 + 0.5), DEPTH_BEYOND),
            DEPTH_BEYOND,
        )
        pixels = mm.astype(np.uint16)
    else:
        pixels = _RGB_TABLE[bufs.cls, bufs.shade]
    return Image(width=k.width, height=k.height, render_pass=render_pass, pixels=pixels)


def render_frame(
    sim: SimState,
    world: World,
    u: UavState,
    k: CameraIntrinsics,
    render_pass: RenderPass,
) -> Image:
    """Render a single pass of the current state."""
    return _extract(_rasterize(sim, world, u, k), render_pass, k)


def capture(sim: SimState, world: World, u: UavState, k: CameraIntrinsics) -> FrameSet:
    """Render all three passes from one consistent snapshot."""
    bufs = _rasterize(sim, world, u, k)
    return FrameSet(
        tick=sim.tick,
        uav=u,
        rgb=_extract(bufs, RenderPass.RGB, k),
        seg=_extract(bufs, RenderPass.SEGMENTATION, k),
        depth=_extract(bufs, RenderPass.DEPTH, k),
    )


# ---------------------------------------------------------------------------
# file formats: binary PPM (P6) for RGB/seg, binary PGM (P5, 16-bit BE) for depth

def ppm_bytes(img: Image) -> bytes:
    if img.render_pass is RenderPass.DEPTH:
        raise InvalidInputError("depth images are written as PGM")
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def pgm_bytes(img: Image) -> bytes:
    if img.render_pass is not RenderPass.DEPTH:
        raise InvalidInputError("only depth images are written as PGM")
    header = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    return header + img.pixels.astype(">u2").tobytes()


def write_ppm(img: Image, path) -> None:
    with open(path, "wb") as f:
        f.write(ppm_bytes(img))


def write_pgm(img: Image, path) -> None:
    with open(path, "wb") as f:
        f.write(pgm_bytes(img))


def _read_netpbm_header(data: bytes) -> tuple[bytes, int, int, int, int]:
    fields = []
    i = 0
    while len(fields) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        fields.append(data[start:i])
    i += 1  # single whitespace after maxval
    magic = fields[0]
    return magic, int(fields[1]), int(fields[2]), int(fields[3]), i


def read_ppm(path, render_pass: RenderPass = RenderPass.RGB) -> Image:
    data = open(path, "rb").read()
    magic, w, h, maxval, off = _read_netpbm_header(data)
    if magic != b"P6" or maxval != 255:
        raise InvalidInputError(f"unsupported PPM: {magic} maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=off)
    return Image(w, h, render_pass, pixels.reshape(h, w, 3).copy())


def read_pgm(path) -> Image:
    data = open(path, "rb").read()
    magic, w, h, maxval, off = _read_netpbm_header(data)
    if magic != b"P5" or maxval != 65535:
        raise InvalidInputError(f"unsupported PGM: {magic} maxval {maxval}")
    pixels = np.frombuffer(data, dtype=">u2", count=w * h, offset=off)
    return Image(w, h, RenderPass.DEPTH, pixels.reshape(h, w).astype(np.uint16))
