/** Studio document: timeline edits, validation, import/export, request building. */

import { coverage, rasterizeStrokes, type RasterGrid } from "./raster";
import type {
  CanvasStroke,
  RequestDocument,
  RequestKeyframe,
  StudioDocument,
} from "./types";

export class IndexCollisionError extends Error {}
export class OutOfRangeError extends Error {}
export class EmptyCanvasError extends Error {}

export function newDocument(overrides: Partial<StudioDocument> = {}): StudioDocument {
  return {
    prompt: "",
    total_frames: 9,
    resolution: [512, 512],
    model: "toy:0",
    keyframes: {},
    job_history: [],
    ...overrides,
  };
}

export function keyframeIndices(doc: StudioDocument): number[] {
  return Object.keys(doc.keyframes)
    .map(Number)
    .sort((a, b) => a - b);
}

function checkRange(doc: StudioDocument, index: number): void {
  if (!Number.isInteger(index) || index < 0 || index >= doc.total_frames) {
    throw new OutOfRangeError(
      `frame index ${index} outside [0, ${doc.total_frames})`,
    );
  }
}

export function addKeyframe(
  doc: StudioDocument,
  index: number,
  strokes: CanvasStroke[] = [],
): StudioDocument {
  checkRange(doc, index);
  if (index in doc.keyframes) {
    throw new IndexCollisionError(`keyframe ${index} already exists`);
  }
  return { ...doc, keyframes: { ...doc.keyframes, [index]: strokes } };
}

/** Move a keyframe to a new index.
 *
 * The move must keep timeline order: the target has to stay strictly between
 * the neighboring keyframes. Crossing a neighbor is rejected rather than
 * reordering the timeline.
 */
export function moveKeyframe(
  doc: StudioDocument,
  from: number,
  to: number,
): StudioDocument {
  if (!(from in doc.keyframes)) {
    throw new OutOfRangeError(`no keyframe at index ${from}`);
  }
  checkRange(doc, to);
  if (to === from) return doc;
  if (to in doc.keyframes) {
    throw new IndexCollisionError(`keyframe ${to} already exists`);
  }
  const others = keyframeIndices(doc).filter((i) => i !== from);
  const prev = others.filter((i) => i < from).pop();
  const next = others.find((i) => i > from);
  if (prev !== undefined && to < prev) {
    throw new OutOfRangeError(`move ${from}->${to} crosses keyframe ${prev}`);
  }
  if (next !== undefined && to > next) {
    throw new OutOfRangeError(`move ${from}->${to} crosses keyframe ${next}`);
  }
  const keyframes = { ...doc.keyframes };
  const strokes = keyframes[from];
  delete keyframes[from];
  keyframes[to] = strokes;
  return { ...doc, keyframes };
}

export function deleteKeyframe(doc: StudioDocument, index: number): StudioDocument {
  if (!(index in doc.keyframes)) {
    throw new OutOfRangeError(`no keyframe at index ${index}`);
  }
  const keyframes = { ...doc.keyframes };
  delete keyframes[index];
  return { ...doc, keyframes };
}

export function setStrokes(
  doc: StudioDocument,
  index: number,
  strokes: CanvasStroke[],
): StudioDocument {
  if (!(index in doc.keyframes)) {
    throw new OutOfRangeError(`no keyframe at index ${index}`);
  }
  return { ...doc, keyframes: { ...doc.keyframes, [index]: strokes } };
}

/** Generate/preview need at least one keyframe to mean anything. */
export function canSubmit(doc: StudioDocument): boolean {
  return keyframeIndices(doc).length >= 1;
}

/** Rasterized export of one keyframe. Blocked while the canvas is empty. */
export function exportKeyframe(
  doc: StudioDocument,
  index: number,
): { frame_index: number; strokes: CanvasStroke[]; raster: RasterGrid } {
  const strokes = doc.keyframes[index];
  if (strokes === undefined) {
    throw new OutOfRangeError(`no keyframe at index ${index}`);
  }
  if (strokes.length === 0) {
    throw new EmptyCanvasError("canvas is empty; draw a stroke before exporting");
  }
  const raster = rasterizeStrokes(strokes, doc.resolution);
  if (coverage(raster) === 0) {
    throw new EmptyCanvasError("strokes cover no pixels at this resolution");
  }
  return { frame_index: index, strokes: strokes.map(cloneStroke), raster };
}

function cloneStroke(s: CanvasStroke): CanvasStroke {
  return { points: s.points.map((p) => [p[0], p[1]] as [number, number]), width: s.width };
}

/** Build the JSON request document the service accepts (polyline keyframes). */
export function toRequestDocument(doc: StudioDocument): RequestDocument {
  const keyframes: RequestKeyframe[] = keyframeIndices(doc).map((index) => ({
    frame_index: index,
    strokes: doc.keyframes[index].map(cloneStroke),
  }));
  const req: RequestDocument = {
    prompt: doc.prompt,
    total_frames: doc.total_frames,
    resolution: [doc.resolution[0], doc.resolution[1]],
    model: doc.model,
    keyframes,
  };
  if (doc.negative_prompt !== undefined) req.negative_prompt = doc.negative_prompt;
  if (doc.seed !== undefined) req.seed = doc.seed;
  if (doc.steps !== undefined) req.steps = doc.steps;
  if (doc.guidance_scale !== undefined) req.guidance_scale = doc.guidance_scale;
  if (doc.control_scale !== undefined) req.control_scale = doc.control_scale;
  if (doc.band !== undefined) req.band = doc.band;
  return req;
}

export function exportDocument(doc: StudioDocument): string {
  return JSON.stringify(doc, null, 2);
}

export function importDocument(json: string): StudioDocument {
  let raw: unknown;
  try {
    raw = JSON.parse(json);
  } catch (err) {
    throw new Error(`document file is not valid JSON: ${err}`);
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error("document file must contain a JSON object");
  }
  const d = raw as Record<string, unknown>;
  if (typeof d.prompt !== "string") throw new Error("document missing prompt");
  if (!Number.isInteger(d.total_frames) || (d.total_frames as number) < 1) {
    throw new Error("document total_frames must be a positive integer");
  }
  if (
    !Array.isArray(d.resolution) ||
    d.resolution.length !== 2 ||
    !d.resolution.every((v) => Number.isInteger(v) && v > 0)
  ) {
    throw new Error("document resolution must be [H, W] positive integers");
  }
  if (typeof d.model !== "string") throw new Error("document missing model");
  const keyframes: Record<number, CanvasStroke[]> = {};
  const rawKf = (d.keyframes ?? {}) as Record<string, unknown>;
  if (typeof rawKf !== "object" || Array.isArray(rawKf)) {
    throw new Error("document keyframes must be an index -> strokes map");
  }
  for (const [key, strokes] of Object.entries(rawKf)) {
    const index = Number(key);
    if (!Number.isInteger(index) || index < 0 || index >= (d.total_frames as number)) {
      throw new Error(`keyframe index ${key} outside [0, ${d.total_frames})`);
    }
    keyframes[index] = parseStrokes(strokes, key);
  }
  const doc = newDocument({
    prompt: d.prompt as string,
    total_frames: d.total_frames as number,
    resolution: [d.resolution[0], d.resolution[1]] as [number, number],
    model: d.model as string,
    keyframes,
    job_history: Array.isArray(d.job_history) ? (d.job_history as StudioDocument["job_history"]) : [],
  });
  for (const opt of ["negative_prompt", "seed", "steps", "guidance_scale", "control_scale", "band"] as const) {
    if (d[opt] !== undefined) (doc as unknown as Record<string, unknown>)[opt] = d[opt];
  }
  return doc;
}

function parseStrokes(raw: unknown, key: string): CanvasStroke[] {
  if (!Array.isArray(raw)) {
    throw new Error(`keyframe ${key} strokes must be an array`);
  }
  return raw.map((s, j) => {
    const stroke = s as Partial<CanvasStroke>;
    if (
      !Array.isArray(stroke.points) ||
      stroke.points.length < 2 ||
      !stroke.points.every(
        (p) =>
          Array.isArray(p) &&
          p.length === 2 &&
          p.every((v) => typeof v === "number" && v >= 0 && v <= 1),
      )
    ) {
      throw new Error(`keyframe ${key} stroke ${j} needs >= 2 points in [0,1]^2`);
    }
    if (typeof stroke.width !== "number" || stroke.width <= 0) {
      throw new Error(`keyframe ${key} stroke ${j} width must be > 0`);
    }
    return cloneStroke(stroke as CanvasStroke);
  });
}
