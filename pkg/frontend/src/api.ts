/** HTTP client for the generation service.
 *
 * Transport failures become NetworkError (retryable banner); HTTP 4xx/5xx
 * become ApiError carrying the server's field-level details when present.
 */

import {
  isTerminal,
  STATUS_RANK,
  type JobRecord,
  type JobStatus,
  type RequestDocument,
  type ValidationDetail,
} from "./types";

export class ApiError extends Error {
  status: number;
  code: string;
  details: ValidationDetail[];

  constructor(status: number, code: string, message: string, details: ValidationDetail[] = []) {
    super(message);
    this.status = status;
    this.code = code;
    this.details = details;
  }
}

export class NetworkError extends Error {}

export interface PollOptions {
  initialDelayMs?: number;
  maxDelayMs?: number;
  factor?: number;
  onUpdate?: (record: JobRecord) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((res) => setTimeout(res, ms));

function summarize(details: ValidationDetail[]): string {
  if (details.length === 0) return "request rejected";
  return details.map((d) => `${d.field || "request"}: ${d.message}`).join("; ");
}

export class StudioClient {
  readonly baseUrl: string;
  private fetchFn: typeof fetch;

  constructor(baseUrl = "", fetchFn: typeof fetch = (...args) => fetch(...args)) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new NetworkError(`service unreachable: ${err}`);
    }
    if (!response.ok) {
      const body = await response.json().catch(() => ({}));
      const code = typeof body.error === "string" ? body.error : `HTTP ${response.status}`;
      const details: ValidationDetail[] = Array.isArray(body.details) ? body.details : [];
      const message =
        code === "ValidationError"
          ? summarize(details)
          : typeof body.error_message === "string" && body.error_message
            ? `${code}: ${body.error_message}`
            : code;
      throw new ApiError(response.status, code, message, details);
    }
    return response;
  }

  async health(): Promise<{ status: string }> {
    const res = await this.request("/healthz");
    return res.json();
  }

  async submitJob(doc: RequestDocument): Promise<{ job_id: string; status: JobStatus }> {
    const res = await this.request("/jobs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    });
    return res.json();
  }

  async getJob(jobId: string): Promise<JobRecord> {
    const res = await this.request(`/jobs/${encodeURIComponent(jobId)}`);
    return res.json();
  }

  async previewTween(doc: RequestDocument): Promise<{ strip: Blob; frameCount: number }> {
    const res = await this.request("/preview/tween", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    });
    const frameCount = Number(res.headers.get("X-Frame-Count") ?? "0");
    return { strip: await res.blob(), frameCount };
  }

  videoUrl(jobId: string): string {
    return `${this.baseUrl}/jobs/${encodeURIComponent(jobId)}/video`;
  }

  /** Poll a job until it reaches done/failed.
   *
   * Delay starts at 1s and doubles up to a 10s ceiling. Status updates are
   * surfaced monotonically: a response whose status ranks below one already
   * seen is ignored, so the displayed status can never regress.
   */
  async pollJob(jobId: string, options: PollOptions = {}): Promise<JobRecord> {
    const {
      initialDelayMs = 1000,
      maxDelayMs = 10000,
      factor = 2,
      onUpdate,
      sleep = defaultSleep,
    } = options;
    let delay = initialDelayMs;
    let bestRank = -1;
    let record = await this.getJob(jobId);
    for (;;) {
      if (STATUS_RANK[record.status] > bestRank) {
        bestRank = STATUS_RANK[record.status];
        onUpdate?.(record);
      }
      if (isTerminal(record.status)) return record;
      await sleep(delay);
      delay = Math.min(delay * factor, maxDelayMs);
      record = await this.getJob(jobId);
    }
  }
}
