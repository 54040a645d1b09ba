/** Shared studio types mirroring the generation service's JSON contracts. */

/** Freehand polyline in normalized [0,1]^2 coordinates; width is in pixels. */
export interface CanvasStroke {
  points: [number, number][];
  width: number;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobHistoryEntry {
  job_id: string;
  submitted_at: string;
  status: JobStatus;
}

/** One editable studio session: prompt, timeline, strokes per keyframe. */
export interface StudioDocument {
  prompt: string;
  negative_prompt?: string;
  total_frames: number;
  resolution: [number, number]; // [H, W]
  model: string;
  seed?: number;
  steps?: number;
  guidance_scale?: number;
  control_scale?: number;
  band?: number;
  keyframes: Record<number, CanvasStroke[]>;
  job_history: JobHistoryEntry[];
}

/** Keyframe entry in a service request document. */
export interface RequestKeyframe {
  frame_index: number;
  strokes?: { points: [number, number][]; width: number }[];
  png_base64?: string;
}

/** Request document shape accepted by POST /jobs and POST /preview/tween. */
export interface RequestDocument {
  prompt: string;
  negative_prompt?: string;
  total_frames: number;
  resolution: [number, number];
  steps?: number;
  guidance_scale?: number;
  control_scale?: number;
  seed?: number;
  band?: number;
  motion?: { lambda: number; direction: [number, number] } | "auto";
  model: string;
  keyframes: RequestKeyframe[];
}

export interface ValidationDetail {
  field: string;
  message: string;
  code?: string;
}

/** Job record as returned by GET /jobs/{id}. */
export interface JobRecord {
  job_id: string;
  status: JobStatus;
  created_at?: string;
  started_at?: string | null;
  finished_at?: string | null;
  artifact_paths?: Record<string, string>;
  error_message?: string | null;
  request?: RequestDocument;
}

export const STATUS_RANK: Record<JobStatus, number> = {
  queued: 0,
  running: 1,
  done: 2,
  failed: 2,
};

export function isTerminal(status: JobStatus): boolean {
  return status === "done" || status === "failed";
}
