import math

import pytest
from hypothesis import given, strategies as st

from uavcrowd.camera import (
    DEFAULT_INTRINSICS,
    CameraIntrinsics,
    ControlCommand,
    InvalidCommandError,
    SPEED_MAX,
    UavState,
    Z_MAX,
    Z_MIN,
    apply_control,
    project,
    unproject,
)

K = DEFAULT_INTRINSICS
NADIR = math.pi / 2


def test_default_intrinsics_match_60deg_hfov():
    assert K.width == 640 and K.height == 480
    assert K.fx == pytest.approx(554.2562584220407)
    assert K.fx == K.fy
    assert (K.cx, K.cy) == (320.0, 240.0)


def test_zero_velocity_hovers():
    u = UavState(pos=(4.0, -2.0, 3.5))
    u2 = apply_control(u, ControlCommand(), dt=0.5)
    assert u2.pos == u.pos


def test_altitude_clamps_at_floor():
    u = UavState(pos=(0.0, 0.0, 1.5))
    u2 = apply_control(u, ControlCommand(vz=-5.0), dt=0.2)
    assert u2.pos[2] == Z_MIN


def test_altitude_clamps_at_ceiling():
    u = UavState(pos=(0.0, 0.0, 119.0))
    u2 = apply_control(u, ControlCommand(vz=14.0), dt=1.0)
    assert u2.pos[2] == Z_MAX


def test_paper_capture_altitude_is_reachable_hover():
    u = UavState(pos=(0.0, 0.0, 3.5))
    for _ in range(30):
        u = apply_control(u, ControlCommand(), dt=1 / 30)
    assert u.pos[2] == 3.5


def test_velocity_norm_clamped():
    u = UavState()
    u2 = apply_control(u, ControlCommand(vx=30.0, vy=40.0), dt=0.1)
    assert math.hypot(*u2.vel) == pytest.approx(SPEED_MAX)


def test_non_finite_command_rejected():
    u = UavState()
    with pytest.raises(InvalidCommandError):
        apply_control(u, ControlCommand(vx=float("nan")), dt=0.1)
    with pytest.raises(InvalidCommandError):
        apply_control(u, ControlCommand(pitch=float("inf")), dt=0.1)
    with pytest.raises(InvalidCommandError):
        apply_control(u, ControlCommand(), dt=0.0)


def test_yaw_pitch_overrides_apply():
    u = UavState()
    u2 = apply_control(u, ControlCommand(yaw=1.0, pitch=0.5), dt=0.1)
    assert (u2.yaw, u2.pitch) == (1.0, 0.5)
    u3 = apply_control(u2, ControlCommand(), dt=0.1)
    assert (u3.yaw, u3.pitch) == (1.0, 0.5)


def test_project_optical_axis_point():
    u = UavState(pos=(0.0, 0.0, 3.5), pitch=NADIR)
    res = project((0.0, 0.0, 0.0), u, K)
    assert res is not None
    assert res[0] == pytest.approx(K.cx, abs=1e-9)
    assert res[1] == pytest.approx(K.cy, abs=1e-9)
    assert res[2] == pytest.approx(3.5, abs=1e-12)


def test_project_one_meter_off_axis():
    u = UavState(pos=(0.0, 0.0, 3.5), pitch=NADIR)
    # at yaw 0 the camera's image-right axis points along world -y
    res = project((0.0, -1.0, 0.0), u, K)
    assert res is not None
    assert res[0] == pytest.approx(K.cx + K.fx / 3.5, abs=1e-9)


def test_project_behind_camera_returns_none():
    u = UavState(pos=(0.0, 0.0, 3.5), pitch=NADIR)
    assert project((0.0, 0.0, 10.0), u, K) is None


@given(
    st.floats(-80, 80), st.floats(-80, 80), st.floats(0, 25),
    st.floats(-3, 3), st.floats(0.2, math.pi / 2),
)
def test_project_unproject_roundtrip(x, y, z, yaw, pitch):
    u = UavState(pos=(5.0, -7.0, 40.0), yaw=yaw, pitch=pitch)
    res = project((x, y, z), u, K)
    if res is None:
        return
    back = unproject(*res, u, K)
    assert max(abs(a - b) for a, b in zip((x, y, z), back)) < 1e-6


def test_scale_consistency_doubling_depth_halves_offset():
    u = UavState(pos=(0.0, 0.0, 100.0), pitch=NADIR)
    near = project((0.0, -2.0, 100.0 - 20.0), u, K)
    far = project((0.0, -2.0, 100.0 - 40.0), u, K)
    assert near is not None and far is not None
    assert (far[0] - K.cx) == pytest.approx((near[0] - K.cx) / 2.0, rel=1e-12)


def test_ground_sample_distance_straight_down():
    h = 12.0
    u = UavState(pos=(0.0, 0.0, h), pitch=NADIR)
    gsd = h / K.fx
    res = project((0.0, -gsd * 5, 0.0), u, K)
    assert res is not None
    assert res[0] - K.cx == pytest.approx(5.0, abs=1e-9)


def test_uav_state_invariants_enforced():
    with pytest.raises(InvalidCommandError):
        UavState(pos=(0.0, 0.0, 0.2))
    with pytest.raises(InvalidCommandError):
        UavState(pos=(0.0, 0.0, 500.0))
    with pytest.raises(InvalidCommandError):
        UavState(vel=(20.0, 0.0, 0.0))


def test_control_command_from_json():
    cmd = ControlCommand.from_json({"vx": 1, "vy": 2, "vz": -1, "pitch": 0.9})
    assert (cmd.vx, cmd.vy, cmd.vz) == (1.0, 2.0, -1.0)
    assert cmd.pitch == 0.9 and cmd.yaw is None


def test_custom_intrinsics_respected():
    k = CameraIntrinsics(width=320, height=240, fx=200.0, fy=200.0, cx=160.0, cy=120.0)
    u = UavState(pos=(0.0, 0.0, 2.0), pitch=NADIR)
    res = project((0.0, 0.0, 0.0), u, k)
    assert res is not None and res[0] == pytest.approx(160.0, abs=1e-9)
