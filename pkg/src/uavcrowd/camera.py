"""UAV kinematics and the pinhole camera mounted under it.

World frame: x/y on the ground plane, z up. The camera yaws about world z and
pitches below the horizon (pitch pi/2 = nadir). Camera frame follows the
usual computer-vision convention: x right, y down in the image, z forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

Z_MIN = 1.0
Z_MAX = 120.0
SPEED_MAX = 15.0

# Forward depth below which points are treated as behind the camera.
NEAR_PLANE = 0.01


class InvalidCommandError(ValueError):
    """A control command carries non-finite or malformed values."""


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 640
    height: int = 480
    # 60 degree horizontal FOV at 640 px: fx = width / (2 tan(hfov/2))
    fx: float = 320.0 / math.tan(math.radians(30.0))
    fy: float = 320.0 / math.tan(math.radians(30.0))
    cx: float = 320.0
    cy: float = 240.0


DEFAULT_INTRINSICS = CameraIntrinsics()

# Oblique view matching typical low-altitude surveillance footage; nadir
# (pi/2) remains available through configuration.
DEFAULT_PITCH = math.radians(60.0)


@dataclass(frozen=True)
class UavState:
    pos: tuple[float, float, float] = (0.0, 0.0, 3.5)
    vel: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    pitch: float = DEFAULT_PITCH

    def __post_init__(self) -> None:
        if not (Z_MIN - 1e-9 <= self.pos[2] <= Z_MAX + 1e-9):
            raise InvalidCommandError(f"altitude {self.pos[2]} outside [{Z_MIN}, {Z_MAX}]")
        if _norm3(self.vel) > SPEED_MAX + 1e-9:
            raise InvalidCommandError(f"|vel| {_norm3(self.vel)} exceeds {SPEED_MAX}")


@dataclass(frozen=True)
class ControlCommand:
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    yaw: float | None = None
    pitch: float | None = None

    @classmethod
    def from_json(cls, doc: dict) -> ControlCommand:
        return cls(
            vx=float(doc.get("vx", 0.0)),
            vy=float(doc.get("vy", 0.0)),
            vz=float(doc.get("vz", 0.0)),
            yaw=None if doc.get("yaw") is None else float(doc["yaw"]),
            pitch=None if doc.get("pitch") is None else float(doc["pitch"]),
        )


def _norm3(v: tuple[float, float, float]) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def apply_control(u: UavState, cmd: ControlCommand, dt: float) -> UavState:
    """Set velocity from the command (norm-clamped), integrate one step,
    clamp altitude to its envelope, and apply yaw/pitch overrides."""
    if dt <= 0:
        raise InvalidCommandError(f"dt must be positive, got {dt}")
    values = [cmd.vx, cmd.vy, cmd.vz]
    if cmd.yaw is not None:
        values.append(cmd.yaw)
    if cmd.pitch is not None:
        values.append(cmd.pitch)
    if not all(math.isfinite(v) for v in values):
        raise InvalidCommandError(f"non-finite control command: {cmd}")

    vel = (cmd.vx, cmd.vy, cmd.vz)
    speed = _norm3(vel)
    if speed > SPEED_MAX:
        scale = SPEED_MAX / speed
        vel = (vel[0] * scale, vel[1] * scale, vel[2] * scale)

    x = u.pos[0] + vel[0] * dt
    y = u.pos[1] + vel[1] * dt
    z = min(Z_MAX, max(Z_MIN, u.pos[2] + vel[2] * dt))
    return replace(
        u,
        pos=(x, y, z),
        vel=vel,
        yaw=u.yaw if cmd.yaw is None else cmd.yaw,
        pitch=u.pitch if cmd.pitch is None else cmd.pitch,
    )


def camera_basis(u: UavState) -> tuple[tuple[float, float, float], ...]:
    """(right, down, forward) unit vectors of the camera frame, in world
    coordinates. Forward tilts ``pitch`` radians below the horizon."""
    cy, sy = math.cos(u.yaw), math.sin(u.yaw)
    cp, sp = math.cos(u.pitch), math.sin(u.pitch)
    forward = (cp * cy, cp * sy, -sp)
    right = (sy, -cy, 0.0)
    down = (-sp * cy, -sp * sy, -cp)
    return right, down, forward


def project(
    p_world: tuple[float, float, float],
    u: UavState,
    k: CameraIntrinsics,
) -> tuple[float, float, float] | None:
    """Pinhole projection of a world point.

    Returns (u_px, v_px, depth_m) where depth is the Euclidean distance from
    the camera center, or None when the point sits at or behind the near
    plane. Pixel coordinates are unclipped; callers decide visibility.
    """
    right, down, forward = camera_basis(u)
    px = p_world[0] - u.pos[0]
    py = p_world[1] - u.pos[1]
    pz = p_world[2] - u.pos[2]
    d = forward[0] * px + forward[1] * py + forward[2] * pz
    if d <= NEAR_PLANE:
        return None
    xc = right[0] * px + right[1] * py + right[2] * pz
    yc = down[0] * px + down[1] * py + down[2] * pz
    return (
        k.fx * (xc / d) + k.cx,
        k.fy * (yc / d) + k.cy,
        math.sqrt(px * px + py * py + pz * pz),
    )


def unproject(
    u_px: float,
    v_px: float,
    depth_m: float,
    u: UavState,
    k: CameraIntrinsics,
) -> tuple[float, float, float]:
    """World point at Euclidean distance ``depth_m`` along the pixel ray."""
    right, down, forward = camera_basis(u)
    gx = (u_px - k.cx) / k.fx
    gy = (v_px - k.cy) / k.fy
    norm = math.sqrt(gx * gx + gy * gy + 1.0)
    sx, sy, sz = gx / norm, gy / norm, 1.0 / norm
    dx = right[0] * sx + down[0] * sy + forward[0] * sz
    dy = right[1] * sx + down[1] * sy + forward[1] * sz
    dz = right[2] * sx + down[2] * sy + forward[2] * sz
    return (
        u.pos[0] + dx * depth_m,
        u.pos[1] + dy * depth_m,
        u.pos[2] + dz * depth_m,
    )
