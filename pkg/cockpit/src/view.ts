// Frame decoding and overlay drawing, kept free of DOM types so the logic is
// unit-testable; main.ts blits the RGBA buffers onto a canvas.

import { Box } from "./protocol.js";

export interface DecodedImage {
  width: number;
  height: number;
  gray16: boolean;
  data: Uint8Array | Uint16Array;
}

function parseHeader(bytes: Uint8Array, magic: string): {
  width: number;
  height: number;
  maxval: number;
  offset: number;
} {
  const fields: string[] = [];
  let i = 0;
  while (fields.length < 4) {
    while (i < bytes.length && isSpace(bytes[i])) i++;
    if (bytes[i] === 0x23) {
      // '#' comment
      while (i < bytes.length && bytes[i] !== 0x0a) i++;
      continue;
    }
    const start = i;
    while (i < bytes.length && !isSpace(bytes[i])) i++;
    fields.push(new TextDecoder().decode(bytes.subarray(start, i)));
  }
  i++; // single whitespace after maxval
  if (fields[0] !== magic) {
    throw new Error(`expected ${magic}, got ${fields[0]}`);
  }
  return {
    width: parseInt(fields[1], 10),
    height: parseInt(fields[2], 10),
    maxval: parseInt(fields[3], 10),
    offset: i,
  };
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;
}

export function decodePpm(bytes: Uint8Array): DecodedImage {
  const h = parseHeader(bytes, "P6");
  if (h.maxval !== 255) throw new Error(`unsupported PPM maxval ${h.maxval}`);
  const n = h.width * h.height * 3;
  return {
    width: h.width,
    height: h.height,
    gray16: false,
    data: bytes.subarray(h.offset, h.offset + n),
  };
}

export function decodePgm16(bytes: Uint8Array): DecodedImage {
  const h = parseHeader(bytes, "P5");
  if (h.maxval !== 65535) throw new Error(`unsupported PGM maxval ${h.maxval}`);
  const n = h.width * h.height;
  const out = new Uint16Array(n);
  let off = h.offset;
  for (let i = 0; i < n; i++) {
    out[i] = (bytes[off] << 8) | bytes[off + 1]; // big-endian samples
    off += 2;
  }
  return { width: h.width, height: h.height, gray16: true, data: out };
}

export function toRgba(img: DecodedImage) {
  const n = img.width * img.height;
  const rgba = new Uint8ClampedArray(n * 4);
  if (img.gray16) {
    const data = img.data as Uint16Array;
    for (let i = 0; i < n; i++) {
      const v = data[i] >> 8; // 16-bit millimeters to 8-bit gray
      rgba[i * 4] = v;
      rgba[i * 4 + 1] = v;
      rgba[i * 4 + 2] = v;
      rgba[i * 4 + 3] = 255;
    }
  } else {
    const data = img.data as Uint8Array;
    for (let i = 0; i < n; i++) {
      rgba[i * 4] = data[i * 3];
      rgba[i * 4 + 1] = data[i * 3 + 1];
      rgba[i * 4 + 2] = data[i * 3 + 2];
      rgba[i * 4 + 3] = 255;
    }
  }
  return rgba;
}

export const OVERLAY_RGB: [number, number, number] = [0, 255, 0];
export const OVERLAY_THICKNESS = 2;

function paint(rgba: Uint8ClampedArray, width: number, x: number, y: number): void {
  const i = (y * width + x) * 4;
  rgba[i] = OVERLAY_RGB[0];
  rgba[i + 1] = OVERLAY_RGB[1];
  rgba[i + 2] = OVERLAY_RGB[2];
  rgba[i + 3] = 255;
}

/** Draw ground-truth boxes as 2-px rectangles; returns how many boxes
 * intersected the canvas and were drawn. */
export function drawBoxes(
  rgba: Uint8ClampedArray,
  width: number,
  height: number,
  boxes: Box[],
): number {
  let drawn = 0;
  for (const box of boxes) {
    if (box.x_max < 0 || box.y_max < 0 || box.x_min >= width || box.y_min >= height) {
      continue;
    }
    drawn++;
    for (let t = 0; t < OVERLAY_THICKNESS; t++) {
      const x0 = box.x_min + t;
      const y0 = box.y_min + t;
      const x1 = box.x_max - t;
      const y1 = box.y_max - t;
      if (x0 > x1 || y0 > y1) break;
      const cx0 = Math.max(0, x0);
      const cx1 = Math.min(width - 1, x1);
      const cy0 = Math.max(0, y0);
      const cy1 = Math.min(height - 1, y1);
      for (let x = cx0; x <= cx1; x++) {
        if (y0 >= 0 && y0 < height) paint(rgba, width, x, y0);
        if (y1 >= 0 && y1 < height) paint(rgba, width, x, y1);
      }
      for (let y = cy0; y <= cy1; y++) {
        if (x0 >= 0 && x0 < width) paint(rgba, width, x0, y);
        if (x1 >= 0 && x1 < width) paint(rgba, width, x1, y);
      }
    }
  }
  return drawn;
}
