// Browser wiring: canvas, HUD, buttons, keyboard and gamepad sampling.

import { HANDLED_KEYS, SteerIntent, steerFromKeys } from "./input.js";
import { FrameData } from "./protocol.js";
import { CockpitSession } from "./session.js";
import { webSocketTransport } from "./transport.js";
import { decodePgm16, decodePpm, drawBoxes, toRgba } from "./view.js";

const $ = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

const canvas = $("view") as unknown as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = $("status");
const hudEl = $("hud");
const addressEl = $("address") as unknown as HTMLInputElement;
const connectBtn = $("connect") as unknown as HTMLButtonElement;
const passEl = $("pass") as unknown as HTMLSelectElement;
const overlayEl = $("overlay") as unknown as HTMLInputElement;
const recordBtn = $("record") as unknown as HTMLButtonElement;
const clipEl = $("clip");

const keys = new Set<string>();
let session: CockpitSession | null = null;

function setStatus(text: string, kind: "ok" | "warn" | "err"): void {
  statusEl.textContent = text;
  statusEl.className = `status ${kind}`;
}

function gamepadIntent(yaw: number): SteerIntent | null {
  const pads = navigator.getGamepads ? navigator.getGamepads() : [];
  const pad = pads && pads[0];
  if (!pad) return null;
  const dead = (v: number) => (Math.abs(v) < 0.15 ? 0 : v);
  const forward = -dead(pad.axes[1] ?? 0);
  const strafe = -dead(pad.axes[0] ?? 0);
  const vertical = -dead(pad.axes[3] ?? 0);
  if (!forward && !strafe && !vertical) return null;
  const speed = 2.0;
  return {
    vx: speed * (forward * Math.cos(yaw) + strafe * Math.cos(yaw + Math.PI / 2)),
    vy: speed * (forward * Math.sin(yaw) + strafe * Math.sin(yaw + Math.PI / 2)),
    vz: vertical,
  };
}

function currentIntent(): SteerIntent {
  const s = session!;
  const fromPad = gamepadIntent(s.yaw);
  const fromKeys = steerFromKeys(keys, s.yaw, s.pitch, 0.1);
  if (fromPad && fromKeys.vx === 0 && fromKeys.vy === 0 && fromKeys.vz === 0) {
    return { ...fromPad, yaw: fromKeys.yaw, pitch: fromKeys.pitch };
  }
  return fromKeys;
}

function render(frame: FrameData): void {
  const pass = passEl.value;
  const bytes = frame.images[pass === "seg" ? "seg" : pass];
  if (!bytes) return;
  const decoded = pass === "depth" ? decodePgm16(bytes) : decodePpm(bytes);
  const rgba = toRgba(decoded);
  if (overlayEl.checked && pass === "rgb") {
    drawBoxes(rgba, decoded.width, decoded.height, frame.header.boxes);
  }
  ctx.putImageData(
    new ImageData(rgba, decoded.width, decoded.height), 0, 0,
  );
  const [x, y, z] = frame.header.uav.pos;
  hudEl.textContent =
    `tick ${frame.header.tick}  pos (${x.toFixed(1)}, ${y.toFixed(1)})  ` +
    `alt ${z.toFixed(1)} m  yaw ${frame.header.uav.yaw.toFixed(2)}  ` +
    `boxes ${frame.header.boxes.length}` +
    (session?.recording ? "  REC" : "");
}

function syncRecordButton(): void {
  if (!session) return;
  recordBtn.disabled = session.state !== "connected";
  recordBtn.textContent = session.recording ? "stop recording" : "record";
}

async function connect(): Promise<void> {
  session?.close();
  const address = addressEl.value || `ws://${location.hostname || "localhost"}:8777`;
  session = new CockpitSession(() => webSocketTransport(address));
  session.onStateChange = (state) => {
    if (state === "connected") setStatus(`connected to ${address}`, "ok");
    else if (state === "connecting") setStatus("connecting...", "warn");
    else if (state === "error")
      setStatus(`${session!.lastError} (retrying)`, "err");
    syncRecordButton();
  };
  session.onFrame = render;
  try {
    await session.connect();
  } catch {
    return; // session retries on its own
  }
  session.startSteering(currentIntent);
}

connectBtn.addEventListener("click", () => void connect());

recordBtn.addEventListener("click", () => {
  const s = session;
  if (!s || s.state !== "connected") return;
  if (s.recording) {
    void s.stopRecording().then(({ clipId, frames }) => {
      clipEl.textContent = `saved ${clipId} (${frames} frames)`;
      syncRecordButton();
    });
  } else if (s.canRecord) {
    void s.startRecording().then((clipId) => {
      clipEl.textContent = `recording ${clipId}...`;
      syncRecordButton();
    });
  }
});

window.addEventListener("keydown", (ev) => {
  const key = ev.key.toLowerCase();
  if (HANDLED_KEYS.has(key)) {
    keys.add(key);
    ev.preventDefault();
  }
});
window.addEventListener("keyup", (ev) => {
  keys.delete(ev.key.toLowerCase());
});
window.addEventListener("blur", () => keys.clear());

passEl.addEventListener("change", () => {
  if (session?.lastFrame) render(session.lastFrame);
});
overlayEl.addEventListener("change", () => {
  if (session?.lastFrame) render(session.lastFrame);
});

setStatus("disconnected", "warn");
addressEl.value = `ws://${location.hostname || "localhost"}:8777`;
