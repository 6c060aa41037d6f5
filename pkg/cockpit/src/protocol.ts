// Wire types and codecs for the uavcrowd control protocol.
//
// Commands and responses are single JSON lines (text frames over WebSocket).
// Streamed frames are binary: 0x01 | u32be total | u32be headerLen | header
// JSON | image buffers concatenated in header order.

export interface Box {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
  component_count: number;
}

export interface UavPose {
  pos: [number, number, number];
  yaw: number;
  pitch: number;
  vel?: [number, number, number];
}

export interface ImageEntry {
  pass: string;
  format: string;
  width: number;
  height: number;
  size: number;
}

export interface FrameHeader {
  tick: number;
  uav: UavPose;
  boxes: Box[];
  images: ImageEntry[];
}

export interface FrameData {
  header: FrameHeader;
  images: Record<string, Uint8Array>;
}

export interface Response {
  request_id: string | null;
  status: "ok" | "error";
  payload?: Record<string, unknown>;
  code?: string;
  message?: string;
}

export function encodeCommand(
  op: string,
  requestId: string,
  args: Record<string, unknown> = {},
): string {
  return JSON.stringify({ op, request_id: requestId, ...args }) + "\n";
}

export function decodeResponse(line: string): Response {
  return JSON.parse(line) as Response;
}

export const FRAME_MAGIC = 0x01;

export function decodeFrameMessage(msg: Uint8Array): FrameData {
  if (msg[0] !== FRAME_MAGIC) {
    throw new Error(`not a frame message (leading byte ${msg[0]})`);
  }
  const view = new DataView(msg.buffer, msg.byteOffset, msg.byteLength);
  const total = view.getUint32(1);
  if (msg.length < 5 + total) {
    throw new Error(`truncated frame: have ${msg.length - 5}, need ${total}`);
  }
  const headerLen = view.getUint32(5);
  const headerBytes = msg.subarray(9, 9 + headerLen);
  const header = JSON.parse(new TextDecoder().decode(headerBytes)) as FrameHeader;
  const images: Record<string, Uint8Array> = {};
  let off = 9 + headerLen;
  for (const entry of header.images) {
    images[entry.pass] = msg.subarray(off, off + entry.size);
    off += entry.size;
  }
  return { header, images };
}
