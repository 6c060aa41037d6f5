// Keyboard steering: WASD planar motion in the camera's heading frame,
// R/F climb and descend, Q/E yaw, arrow up/down camera pitch.

export interface SteerIntent {
  vx: number;
  vy: number;
  vz: number;
  yaw?: number; // absolute yaw to command, when turning
  pitch?: number; // absolute camera pitch, when tilting
}

export const SPEEDS = {
  planar: 2.0, // m/s
  vertical: 1.0, // m/s
  yawRate: 1.2, // rad/s
  pitchRate: 0.6, // rad/s
};

const MIN_PITCH = 0.1;
const MAX_PITCH = Math.PI / 2;

export function steerFromKeys(
  keys: ReadonlySet<string>,
  yaw: number,
  pitch: number,
  dt: number,
): SteerIntent {
  let forward = 0;
  let strafe = 0;
  let vz = 0;
  if (keys.has("w")) forward += 1;
  if (keys.has("s")) forward -= 1;
  if (keys.has("a")) strafe += 1; // left = +90 degrees from heading
  if (keys.has("d")) strafe -= 1;
  if (keys.has("r")) vz += 1;
  if (keys.has("f")) vz -= 1;

  const intent: SteerIntent = {
    vx:
      SPEEDS.planar *
      (forward * Math.cos(yaw) + strafe * Math.cos(yaw + Math.PI / 2)),
    vy:
      SPEEDS.planar *
      (forward * Math.sin(yaw) + strafe * Math.sin(yaw + Math.PI / 2)),
    vz: SPEEDS.vertical * vz,
  };

  let yawDelta = 0;
  if (keys.has("q")) yawDelta += SPEEDS.yawRate * dt;
  if (keys.has("e")) yawDelta -= SPEEDS.yawRate * dt;
  if (yawDelta !== 0) intent.yaw = yaw + yawDelta;

  let pitchDelta = 0;
  if (keys.has("arrowup")) pitchDelta -= SPEEDS.pitchRate * dt;
  if (keys.has("arrowdown")) pitchDelta += SPEEDS.pitchRate * dt;
  if (pitchDelta !== 0) {
    intent.pitch = Math.min(MAX_PITCH, Math.max(MIN_PITCH, pitch + pitchDelta));
  }
  return intent;
}

export function isIdle(intent: SteerIntent): boolean {
  return (
    intent.vx === 0 &&
    intent.vy === 0 &&
    intent.vz === 0 &&
    intent.yaw === undefined &&
    intent.pitch === undefined
  );
}

export const HANDLED_KEYS = new Set([
  "w", "a", "s", "d", "r", "f", "q", "e", "arrowup", "arrowdown",
]);
