import { describe, expect, it } from "vitest";

import { isIdle, SPEEDS, steerFromKeys } from "../src/input.js";

const keys = (...ks: string[]) => new Set(ks);

describe("keyboard steering", () => {
  it("no keys means zero velocity", () => {
    const intent = steerFromKeys(keys(), 0.7, 1.0, 0.1);
    expect(Math.hypot(intent.vx, intent.vy, intent.vz)).toBe(0);
    expect(intent.yaw).toBeUndefined();
    expect(intent.pitch).toBeUndefined();
    expect(isIdle(intent)).toBe(true);
  });

  it("forward moves along the heading", () => {
    const yaw = 0.7;
    const intent = steerFromKeys(keys("w"), yaw, 1.0, 0.1);
    expect(intent.vx).toBeCloseTo(SPEEDS.planar * Math.cos(yaw), 10);
    expect(intent.vy).toBeCloseTo(SPEEDS.planar * Math.sin(yaw), 10);
    expect(intent.vz).toBe(0);
  });

  it("opposite keys cancel", () => {
    const intent = steerFromKeys(keys("w", "s", "a", "d"), 0.3, 1.0, 0.1);
    expect(Math.hypot(intent.vx, intent.vy)).toBeCloseTo(0, 10);
  });

  it("altitude keys map to vertical velocity", () => {
    expect(steerFromKeys(keys("r"), 0, 1, 0.1).vz).toBe(SPEEDS.vertical);
    expect(steerFromKeys(keys("f"), 0, 1, 0.1).vz).toBe(-SPEEDS.vertical);
  });

  it("yaw keys command an absolute yaw", () => {
    const intent = steerFromKeys(keys("q"), 1.0, 1.0, 0.1);
    expect(intent.yaw).toBeCloseTo(1.0 + SPEEDS.yawRate * 0.1, 10);
    expect(steerFromKeys(keys("e"), 1.0, 1.0, 0.1).yaw).toBeCloseTo(
      1.0 - SPEEDS.yawRate * 0.1, 10,
    );
  });

  it("pitch keys clamp to the camera envelope", () => {
    const up = steerFromKeys(keys("arrowdown"), 0, Math.PI / 2 - 0.01, 1.0);
    expect(up.pitch).toBeCloseTo(Math.PI / 2, 10);
    const down = steerFromKeys(keys("arrowup"), 0, 0.12, 1.0);
    expect(down.pitch).toBeCloseTo(0.1, 10);
  });
});
