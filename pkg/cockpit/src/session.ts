// Cockpit session: request/response correlation, the frame stream mirror,
// the 10 Hz steering loop, and recording state. All simulation effects go
// through protocol commands; the session itself only mirrors server state.

import {
  FrameData,
  Response,
  decodeFrameMessage,
  decodeResponse,
  encodeCommand,
} from "./protocol.js";
import { SteerIntent } from "./input.js";
import { Transport, TransportFactory } from "./transport.js";

export type SessionState = "idle" | "connecting" | "connected" | "error";

export interface SessionOptions {
  streamPasses?: string[];
  streamRateHz?: number;
  steerIntervalMs?: number;
  retryMs?: number;
  requestTimeoutMs?: number;
}

interface Pending {
  resolve: (payload: Record<string, unknown>) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout>;
}

export interface ServerStatePayload {
  tick: number;
  uav: { pos: number[]; vel: number[]; yaw: number; pitch: number };
  agents: number;
  groups: number;
  recording: boolean;
  clips: { clip_id: string; frames: number; label: string }[];
}

export class CockpitSession {
  state: SessionState = "idle";
  lastError = "";
  lastFrame: FrameData | null = null;
  framesReceived = 0;
  yaw = 0;
  pitch = Math.PI / 3;
  recording = false;
  lastClipId: string | null = null;

  onFrame: (frame: FrameData) => void = () => {};
  onStateChange: (state: SessionState) => void = () => {};

  private transport: Transport | null = null;
  private pending = new Map<string, Pending>();
  private requestCounter = 0;
  private steerTimer: ReturnType<typeof setInterval> | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;
  private readonly opts: Required<SessionOptions>;

  constructor(
    private readonly makeTransport: TransportFactory,
    opts: SessionOptions = {},
  ) {
    this.opts = {
      streamPasses: opts.streamPasses ?? ["rgb", "seg", "depth"],
      streamRateHz: opts.streamRateHz ?? 10,
      steerIntervalMs: opts.steerIntervalMs ?? 100,
      retryMs: opts.retryMs ?? 2000,
      requestTimeoutMs: opts.requestTimeoutMs ?? 10_000,
    };
  }

  async connect(): Promise<void> {
    this.closed = false;
    this.setState("connecting");
    try {
      const transport = await this.makeTransport();
      transport.onText((line) => this.handleLine(line));
      transport.onBinary((msg) => this.handleBinary(msg));
      transport.onClose(() => this.handleClose());
      this.transport = transport;
      const state = (await this.request("GetState")) as unknown as ServerStatePayload;
      this.yaw = state.uav.yaw;
      this.pitch = state.uav.pitch;
      this.recording = state.recording;
      await this.request("GetImages", {
        passes: this.opts.streamPasses,
        stream: true,
        rate_hz: this.opts.streamRateHz,
      });
      this.setState("connected");
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
      this.setState("error");
      this.scheduleRetry();
      throw err;
    }
  }

  close(): void {
    this.closed = true;
    if (this.retryTimer) clearTimeout(this.retryTimer);
    this.stopSteering();
    this.transport?.close();
    this.transport = null;
    this.setState("idle");
  }

  request(
    op: string,
    args: Record<string, unknown> = {},
  ): Promise<Record<string, unknown>> {
    const transport = this.transport;
    if (!transport) {
      return Promise.reject(new Error("not connected"));
    }
    const id = `c${++this.requestCounter}`;
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        reject(new Error(`${op}: response timeout`));
      }, this.opts.requestTimeoutMs);
      this.pending.set(id, { resolve, reject, timer });
      transport.send(encodeCommand(op, id, args));
    });
  }

  /** Wait until a frame newer than `afterTick` arrives. */
  waitForFrame(afterTick: number, timeoutMs: number): Promise<FrameData> {
    return new Promise((resolve, reject) => {
      if (this.lastFrame && this.lastFrame.header.tick > afterTick) {
        resolve(this.lastFrame);
        return;
      }
      const prev = this.onFrame;
      const timer = setTimeout(() => {
        this.onFrame = prev;
        reject(new Error(`no frame within ${timeoutMs} ms`));
      }, timeoutMs);
      this.onFrame = (frame) => {
        prev(frame);
        if (frame.header.tick > afterTick) {
          clearTimeout(timer);
          this.onFrame = prev;
          resolve(frame);
        }
      };
    });
  }

  // -- steering ---------------------------------------------------------------

  startSteering(provider: () => SteerIntent): void {
    this.stopSteering();
    this.steerTimer = setInterval(() => {
      void this.steerOnce(provider());
    }, this.opts.steerIntervalMs);
  }

  stopSteering(): void {
    if (this.steerTimer) {
      clearInterval(this.steerTimer);
      this.steerTimer = null;
    }
  }

  async steerOnce(intent: SteerIntent): Promise<void> {
    if (this.state !== "connected") return;
    const args: Record<string, unknown> = {
      vx: intent.vx,
      vy: intent.vy,
      vz: intent.vz,
    };
    if (intent.yaw !== undefined) {
      args.yaw = intent.yaw;
      this.yaw = intent.yaw;
    }
    try {
      await this.request("SetVelocity", args);
      if (intent.pitch !== undefined) {
        await this.request("SetCameraPitch", { pitch: intent.pitch });
        this.pitch = intent.pitch;
      }
    } catch {
      // dropped inputs while disconnecting are fine
    }
  }

  // -- recording --------------------------------------------------------------

  get canRecord(): boolean {
    return this.state === "connected" && !this.recording;
  }

  async startRecording(): Promise<string> {
    const payload = await this.request("StartRecording");
    this.recording = true;
    this.lastClipId = String(payload.clip_id);
    return this.lastClipId;
  }

  async stopRecording(): Promise<{ clipId: string; frames: number }> {
    const payload = await this.request("StopRecording");
    this.recording = false;
    this.lastClipId = String(payload.clip_id);
    return { clipId: this.lastClipId, frames: Number(payload.frames) };
  }

  // -- internals ----------------------------------------------------------------

  private handleLine(line: string): void {
    let resp: Response;
    try {
      resp = decodeResponse(line);
    } catch {
      return;
    }
    if (resp.request_id == null) {
      this.lastError = resp.message ?? resp.code ?? "server error";
      return;
    }
    const pending = this.pending.get(resp.request_id);
    if (!pending) return;
    this.pending.delete(resp.request_id);
    clearTimeout(pending.timer);
    if (resp.status === "ok") {
      pending.resolve(resp.payload ?? {});
    } else {
      pending.reject(new Error(`${resp.code}: ${resp.message ?? "error"}`));
    }
  }

  private handleBinary(msg: Uint8Array): void {
    let frame: FrameData;
    try {
      frame = decodeFrameMessage(msg);
    } catch {
      return;
    }
    // never regress: the displayed frame is the newest received
    if (this.lastFrame && frame.header.tick < this.lastFrame.header.tick) {
      return;
    }
    this.lastFrame = frame;
    this.framesReceived++;
    this.yaw = frame.header.uav.yaw;
    this.pitch = frame.header.uav.pitch;
    this.onFrame(frame);
  }

  private handleClose(): void {
    this.transport = null;
    for (const [, pending] of this.pending) {
      clearTimeout(pending.timer);
      pending.reject(new Error("connection closed"));
    }
    this.pending.clear();
    if (!this.closed) {
      this.lastError = "connection lost";
      this.setState("error");
      this.scheduleRetry();
    }
  }

  private scheduleRetry(): void {
    if (this.closed || this.retryTimer) return;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      if (!this.closed && this.state === "error") {
        void this.connect().catch(() => {});
      }
    }, this.opts.retryMs);
  }

  private setState(state: SessionState): void {
    this.state = state;
    this.onStateChange(state);
  }
}
