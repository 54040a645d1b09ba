/** Client-side stroke rasterizer.
 *
 * Mirrors the server rule so the preview is WYSIWYG: a pixel is covered iff
 * its center (col + 0.5, row + 0.5) lies within width/2 of any polyline
 * segment, with normalized coordinates scaled by the target width/height.
 * Comparison is on squared distances; any drift vs the server stays inside
 * the 1px contract only if this function is kept in lockstep with it.
 */

import type { CanvasStroke } from "./types";

export interface RasterGrid {
  width: number;
  height: number;
  /** Row-major, length width*height, values 0 or 1. */
  data: Uint8Array;
}

export function rasterizeStrokes(
  strokes: CanvasStroke[],
  resolution: [number, number],
): RasterGrid {
  const [h, w] = resolution;
  if (!Number.isInteger(h) || !Number.isInteger(w) || h < 1 || w < 1) {
    throw new Error(`resolution must be positive integers, got ${h}x${w}`);
  }
  const data = new Uint8Array(h * w);
  for (const stroke of strokes) {
    if (stroke.width <= 0) {
      throw new Error(`stroke width must be > 0, got ${stroke.width}`);
    }
    if (stroke.points.length < 2) {
      throw new Error(`polyline has ${stroke.points.length} point(s); need >= 2`);
    }
    const radius = stroke.width / 2;
    const xs = stroke.points.map((p) => p[0] * w);
    const ys = stroke.points.map((p) => p[1] * h);
    for (let i = 0; i + 1 < xs.length; i++) {
      markSegment(data, w, h, xs[i], ys[i], xs[i + 1], ys[i + 1], radius);
    }
  }
  return { width: w, height: h, data };
}

export function coverage(grid: RasterGrid): number {
  let n = 0;
  for (let i = 0; i < grid.data.length; i++) n += grid.data[i];
  return n;
}

function markSegment(
  data: Uint8Array,
  w: number,
  h: number,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  radius: number,
): void {
  const r2 = radius * radius;
  const dx = x1 - x0;
  const dy = y1 - y0;
  const seg2 = dx * dx + dy * dy;
  // Scan only the padded bounding box; pixels outside it are strictly
  // farther than radius from the segment, so the result matches a full scan.
  const c0 = Math.max(0, Math.floor(Math.min(x0, x1) - radius - 1));
  const c1 = Math.min(w - 1, Math.ceil(Math.max(x0, x1) + radius + 1));
  const rw0 = Math.max(0, Math.floor(Math.min(y0, y1) - radius - 1));
  const rw1 = Math.min(h - 1, Math.ceil(Math.max(y0, y1) + radius + 1));

  for (let row = rw0; row <= rw1; row++) {
    const py = row + 0.5;
    for (let col = c0; col <= c1; col++) {
      const px = col + 0.5;
      let d2: number;
      if (seg2 === 0) {
        d2 = (px - x0) ** 2 + (py - y0) ** 2;
      } else {
        let t = ((px - x0) * dx + (py - y0) * dy) / seg2;
        t = t < 0 ? 0 : t > 1 ? 1 : t;
        d2 = (px - (x0 + t * dx)) ** 2 + (py - (y0 + t * dy)) ** 2;
      }
      if (d2 <= r2) data[row * w + col] = 1;
    }
  }
}

/** Paint a raster into RGBA pixels (white strokes on black) for canvas preview. */
export function rasterToRgba(grid: RasterGrid): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(grid.width * grid.height * 4);
  for (let i = 0; i < grid.data.length; i++) {
    const v = grid.data[i] ? 255 : 0;
    out[i * 4] = v;
    out[i * 4 + 1] = v;
    out[i * 4 + 2] = v;
    out[i * 4 + 3] = 255;
  }
  return out;
}
