/** Single-page sketch studio.
 *
 * One document, one canvas. Strokes are captured as normalized polylines on
 * the selected keyframe; preview and generation talk to the service through
 * StudioClient. Preview/submit are serialized per document (busy flag) and
 * each job gets one in-flight poll.
 */

import { ApiError, NetworkError, StudioClient, type PollOptions } from "./api";
import {
  addKeyframe,
  canSubmit,
  deleteKeyframe,
  EmptyCanvasError,
  exportDocument,
  exportKeyframe,
  importDocument,
  IndexCollisionError,
  keyframeIndices,
  moveKeyframe,
  newDocument,
  OutOfRangeError,
  setStrokes,
  toRequestDocument,
} from "./document";
import { rasterizeStrokes, rasterToRgba } from "./raster";
import { STATUS_RANK, type CanvasStroke, type JobRecord, type JobStatus, type StudioDocument } from "./types";

interface StudioOptions {
  document?: StudioDocument;
  pollOptions?: PollOptions;
}

export class SketchStudio {
  doc: StudioDocument;
  selected: number | null = null;

  private root: HTMLElement;
  private client: StudioClient;
  private pollOptions: PollOptions;
  private busy = false;
  private badgeRank = -1;
  private badgeJob: string | null = null;
  private drawing: CanvasStroke | null = null;
  private ctx: CanvasRenderingContext2D | null | undefined;

  private canvas!: HTMLCanvasElement;
  private promptInput!: HTMLInputElement;
  private framesInput!: HTMLInputElement;
  private widthInput!: HTMLInputElement;
  private addInput!: HTMLInputElement;
  private moveInput!: HTMLInputElement;
  private timeline!: HTMLUListElement;
  private timelineError!: HTMLElement;
  private canvasError!: HTMLElement;
  private previewImg!: HTMLImageElement;
  private previewCount!: HTMLElement;
  private badge!: HTMLElement;
  private result!: HTMLElement;
  private banner!: HTMLElement;
  private bannerText!: HTMLElement;
  private bannerRetry!: HTMLButtonElement;
  private historyList!: HTMLUListElement;
  private generateBtn!: HTMLButtonElement;
  private previewBtn!: HTMLButtonElement;
  private exportPngBtn!: HTMLButtonElement;

  private retryAction: (() => void) | null = null;

  constructor(root: HTMLElement, client: StudioClient, options: StudioOptions = {}) {
    this.root = root;
    this.client = client;
    this.doc = options.document ?? newDocument();
    this.pollOptions = options.pollOptions ?? {};
    this.build();
    this.renderTimeline();
    this.renderHistory();
    this.updateControls();
  }

  private build(): void {
    this.root.innerHTML = `
      <div class="studio">
        <section class="settings">
          <label>Prompt <input data-role="prompt" type="text"></label>
          <label>Frames <input data-role="total-frames" type="number" min="1"></label>
          <label>Stroke width <input data-role="stroke-width" type="number" min="1" value="16"></label>
        </section>
        <section class="board">
          <canvas data-role="canvas"></canvas>
          <div data-role="canvas-error" class="inline-error" hidden></div>
          <button data-role="export-png">Export PNG</button>
          <button data-role="export-doc">Save document</button>
        </section>
        <section class="timeline">
          <ul data-role="timeline"></ul>
          <div data-role="timeline-error" class="inline-error" hidden></div>
          <label>Add at <input data-role="add-index" type="number" min="0"></label>
          <button data-role="add-keyframe">Add keyframe</button>
          <label>Move to <input data-role="move-index" type="number" min="0"></label>
          <button data-role="move-keyframe">Move selected</button>
          <button data-role="delete-keyframe">Delete selected</button>
        </section>
        <section class="run">
          <button data-role="preview">Preview tween</button>
          <img data-role="preview-strip" alt="" hidden>
          <span data-role="preview-count"></span>
          <button data-role="generate">Generate</button>
          <span data-role="status-badge"></span>
          <div data-role="result"></div>
        </section>
        <div data-role="banner" class="banner" hidden>
          <span data-role="banner-text"></span>
          <button data-role="banner-retry" hidden>Retry</button>
        </div>
        <ul data-role="history"></ul>
      </div>`;

    const q = <T extends Element>(sel: string) => this.root.querySelector(sel) as T;
    this.canvas = q('[data-role="canvas"]');
    this.promptInput = q('[data-role="prompt"]');
    this.framesInput = q('[data-role="total-frames"]');
    this.widthInput = q('[data-role="stroke-width"]');
    this.addInput = q('[data-role="add-index"]');
    this.moveInput = q('[data-role="move-index"]');
    this.timeline = q('[data-role="timeline"]');
    this.timelineError = q('[data-role="timeline-error"]');
    this.canvasError = q('[data-role="canvas-error"]');
    this.previewImg = q('[data-role="preview-strip"]');
    this.previewCount = q('[data-role="preview-count"]');
    this.badge = q('[data-role="status-badge"]');
    this.result = q('[data-role="result"]');
    this.banner = q('[data-role="banner"]');
    this.bannerText = q('[data-role="banner-text"]');
    this.bannerRetry = q('[data-role="banner-retry"]');
    this.historyList = q('[data-role="history"]');
    this.generateBtn = q('[data-role="generate"]');
    this.previewBtn = q('[data-role="preview"]');
    this.exportPngBtn = q('[data-role="export-png"]');

    this.canvas.width = this.doc.resolution[1];
    this.canvas.height = this.doc.resolution[0];
    this.promptInput.value = this.doc.prompt;
    this.framesInput.value = String(this.doc.total_frames);

    this.promptInput.addEventListener("input", () => {
      this.doc = { ...this.doc, prompt: this.promptInput.value };
      this.promptInput.classList.remove("field-error");
    });
    this.framesInput.addEventListener("change", () => {
      const n = Number(this.framesInput.value);
      if (Number.isInteger(n) && n >= 1) {
        this.doc = { ...this.doc, total_frames: n };
        this.framesInput.classList.remove("field-error");
      }
    });

    this.canvas.addEventListener("mousedown", (e) => this.penDown(e));
    this.canvas.addEventListener("mousemove", (e) => this.penMove(e));
    this.canvas.addEventListener("mouseup", () => this.penUp());
    this.canvas.addEventListener("mouseleave", () => this.penUp());

    q<HTMLButtonElement>('[data-role="add-keyframe"]').addEventListener("click", () =>
      this.addAt(Number(this.addInput.value)),
    );
    q<HTMLButtonElement>('[data-role="move-keyframe"]').addEventListener("click", () =>
      this.moveSelected(Number(this.moveInput.value)),
    );
    q<HTMLButtonElement>('[data-role="delete-keyframe"]').addEventListener("click", () =>
      this.deleteSelected(),
    );
    this.exportPngBtn.addEventListener("click", () => this.exportPng());
    q<HTMLButtonElement>('[data-role="export-doc"]').addEventListener("click", () =>
      this.downloadDocument(),
    );
    this.previewBtn.addEventListener("click", () => void this.previewTween());
    this.generateBtn.addEventListener("click", () => void this.generate());
    this.bannerRetry.addEventListener("click", () => {
      const action = this.retryAction;
      this.hideBanner();
      action?.();
    });
  }

  // --- drawing ---

  private canvasPoint(e: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const w = rect.width > 0 ? rect.width : this.canvas.width;
    const h = rect.height > 0 ? rect.height : this.canvas.height;
    const x = Math.min(1, Math.max(0, (e.clientX - rect.left) / w));
    const y = Math.min(1, Math.max(0, (e.clientY - rect.top) / h));
    return [x, y];
  }

  private penDown(e: MouseEvent): void {
    if (this.selected === null) return;
    const width = Number(this.widthInput.value) || 16;
    this.drawing = { points: [this.canvasPoint(e)], width };
  }

  private penMove(e: MouseEvent): void {
    if (!this.drawing) return;
    this.drawing.points.push(this.canvasPoint(e));
  }

  private penUp(): void {
    if (!this.drawing || this.selected === null) {
      this.drawing = null;
      return;
    }
    const stroke = this.drawing;
    this.drawing = null;
    if (stroke.points.length === 1) {
      stroke.points.push([stroke.points[0][0], stroke.points[0][1]]);
    }
    const strokes = [...this.doc.keyframes[this.selected], stroke];
    this.doc = setStrokes(this.doc, this.selected, strokes);
    this.canvasError.hidden = true;
    this.repaint();
    this.renderTimeline();
  }

  private ctx2d(): CanvasRenderingContext2D | null {
    if (this.ctx === undefined) {
      try {
        this.ctx = this.canvas.getContext("2d");
      } catch {
        this.ctx = null; // headless test environment
      }
    }
    return this.ctx;
  }

  repaint(): void {
    const ctx = this.ctx2d();
    if (!ctx) return;
    const strokes = this.selected !== null ? this.doc.keyframes[this.selected] : [];
    const grid = rasterizeStrokes(strokes ?? [], [this.canvas.height, this.canvas.width]);
    const image = new ImageData(rasterToRgba(grid), grid.width, grid.height);
    ctx.putImageData(image, 0, 0);
  }

  // --- timeline ---

  selectKeyframe(index: number): void {
    if (!(index in this.doc.keyframes)) return;
    this.selected = index;
    this.renderTimeline();
    this.repaint();
  }

  addAt(index: number): void {
    try {
      this.doc = addKeyframe(this.doc, index);
      this.timelineError.hidden = true;
      this.selected = index;
    } catch (err) {
      if (err instanceof IndexCollisionError || err instanceof OutOfRangeError) {
        this.showTimelineError(err.message);
      } else {
        throw err;
      }
    }
    this.renderTimeline();
    this.updateControls();
  }

  moveSelected(to: number): void {
    if (this.selected === null) return;
    try {
      this.doc = moveKeyframe(this.doc, this.selected, to);
      this.selected = to;
      this.timelineError.hidden = true;
    } catch (err) {
      if (err instanceof IndexCollisionError || err instanceof OutOfRangeError) {
        this.showTimelineError(err.message);
      } else {
        throw err;
      }
    }
    this.renderTimeline();
  }

  deleteSelected(): void {
    if (this.selected === null) return;
    this.doc = deleteKeyframe(this.doc, this.selected);
    const rest = keyframeIndices(this.doc);
    this.selected = rest.length > 0 ? rest[0] : null;
    this.renderTimeline();
    this.updateControls();
    this.repaint();
  }

  private showTimelineError(message: string): void {
    this.timelineError.textContent = message;
    this.timelineError.hidden = false;
  }

  renderTimeline(): void {
    this.timeline.innerHTML = "";
    for (const index of keyframeIndices(this.doc)) {
      const li = document.createElement("li");
      li.dataset.role = "timeline-entry";
      li.dataset.index = String(index);
      if (index === this.selected) li.classList.add("selected");
      const strokes = this.doc.keyframes[index];
      li.textContent = `frame ${index} (${strokes.length} stroke${strokes.length === 1 ? "" : "s"})`;
      li.addEventListener("click", () => this.selectKeyframe(index));
      this.timeline.appendChild(li);
    }
  }

  private updateControls(): void {
    const ok = canSubmit(this.doc);
    this.generateBtn.disabled = !ok || this.busy;
    this.previewBtn.disabled = !ok || this.busy;
    this.exportPngBtn.disabled = this.selected === null;
  }

  // --- export ---

  exportPng(): { width: number; height: number; data: Uint8Array } | null {
    if (this.selected === null) return null;
    try {
      const payload = exportKeyframe(this.doc, this.selected);
      this.canvasError.hidden = true;
      this.triggerPngDownload(payload.raster);
      return payload.raster;
    } catch (err) {
      if (err instanceof EmptyCanvasError) {
        this.canvasError.textContent = err.message;
        this.canvasError.hidden = false;
        return null;
      }
      throw err;
    }
  }

  private triggerPngDownload(raster: { width: number; height: number }): void {
    const ctx = this.ctx2d();
    if (!ctx || typeof this.canvas.toDataURL !== "function") return;
    this.repaint();
    try {
      this.download(this.canvas.toDataURL("image/png"), `keyframe_${this.selected}_${raster.width}x${raster.height}.png`);
    } catch {
      // canvas export unsupported here; polyline save still available
    }
  }

  downloadDocument(): string {
    const json = exportDocument(this.doc);
    this.download(`data:application/json,${encodeURIComponent(json)}`, "studio_document.json");
    return json;
  }

  loadDocument(json: string): void {
    this.doc = importDocument(json);
    const indices = keyframeIndices(this.doc);
    this.selected = indices.length > 0 ? indices[0] : null;
    this.promptInput.value = this.doc.prompt;
    this.framesInput.value = String(this.doc.total_frames);
    this.canvas.width = this.doc.resolution[1];
    this.canvas.height = this.doc.resolution[0];
    this.renderTimeline();
    this.renderHistory();
    this.updateControls();
    this.repaint();
  }

  private download(href: string, filename: string): void {
    const a = document.createElement("a");
    a.href = href;
    a.download = filename;
    if (typeof a.click === "function" && !navigator.userAgent.includes("jsdom")) {
      a.click();
    }
  }

  // --- service round trips ---

  async previewTween(): Promise<void> {
    if (this.busy || !canSubmit(this.doc)) return;
    this.busy = true;
    this.updateControls();
    this.clearHighlights();
    try {
      const { strip, frameCount } = await this.client.previewTween(
        toRequestDocument(this.doc),
      );
      this.previewCount.textContent = `${frameCount} frames`;
      await this.showStrip(strip);
    } catch (err) {
      this.handleServiceError(err, () => void this.previewTween());
    } finally {
      this.busy = false;
      this.updateControls();
    }
  }

  async generate(): Promise<void> {
    if (this.busy || !canSubmit(this.doc)) return;
    this.busy = true;
    this.updateControls();
    this.clearHighlights();
    this.result.innerHTML = "";
    try {
      const { job_id } = await this.client.submitJob(toRequestDocument(this.doc));
      this.badgeJob = job_id;
      this.badgeRank = -1;
      this.pushHistory(job_id, "queued");
      this.setBadge(job_id, "queued");
      const record = await this.client.pollJob(job_id, {
        ...this.pollOptions,
        onUpdate: (r) => {
          this.setBadge(job_id, r.status);
          this.updateHistory(job_id, r.status);
          this.pollOptions.onUpdate?.(r);
        },
      });
      if (record.status === "done") {
        this.embedResult(job_id, record);
      } else {
        this.showBanner(record.error_message || "generation failed", null);
      }
    } catch (err) {
      this.handleServiceError(err, () => void this.generate());
    } finally {
      this.busy = false;
      this.updateControls();
    }
  }

  private async showStrip(strip: Blob): Promise<void> {
    const url = await blobToDataUrl(strip);
    this.previewImg.src = url;
    this.previewImg.hidden = false;
  }

  private setBadge(jobId: string, status: JobStatus): void {
    if (jobId !== this.badgeJob) return;
    const rank = STATUS_RANK[status];
    if (rank < this.badgeRank) return; // never regress what the user sees
    this.badgeRank = rank;
    this.badge.textContent = status;
    this.badge.className = `status-${status}`;
  }

  private embedResult(jobId: string, record: JobRecord): void {
    const src = this.client.videoUrl(jobId);
    const path = record.artifact_paths?.video ?? "";
    const embed = path.endsWith(".mp4")
      ? document.createElement("video")
      : document.createElement("img");
    if (embed instanceof HTMLVideoElement) {
      embed.controls = true;
      embed.loop = true;
    }
    embed.dataset.role = "video-embed";
    embed.src = src;
    this.result.appendChild(embed);
  }

  // --- history ---

  private pushHistory(jobId: string, status: JobStatus): void {
    this.doc = {
      ...this.doc,
      job_history: [
        ...this.doc.job_history,
        { job_id: jobId, submitted_at: new Date().toISOString(), status },
      ],
    };
    this.renderHistory();
  }

  private updateHistory(jobId: string, status: JobStatus): void {
    this.doc = {
      ...this.doc,
      job_history: this.doc.job_history.map((e) =>
        e.job_id === jobId ? { ...e, status } : e,
      ),
    };
    this.renderHistory();
  }

  renderHistory(): void {
    this.historyList.innerHTML = "";
    for (const entry of this.doc.job_history) {
      const li = document.createElement("li");
      li.dataset.role = "history-entry";
      li.dataset.jobId = entry.job_id;
      li.textContent = `${entry.job_id}: ${entry.status}`;
      this.historyList.appendChild(li);
    }
  }

  // --- error surfaces ---

  private handleServiceError(err: unknown, retry: () => void): void {
    if (err instanceof NetworkError) {
      this.showBanner(err.message, retry);
      return;
    }
    if (err instanceof ApiError) {
      if (err.code === "ValidationError") {
        this.applyFieldHighlights(err);
      }
      this.showBanner(err.message, null);
      return;
    }
    throw err;
  }

  private applyFieldHighlights(err: ApiError): void {
    const sorted = keyframeIndices(this.doc);
    for (const detail of err.details) {
      if (detail.field === "prompt") {
        this.promptInput.classList.add("field-error");
      } else if (detail.field === "total_frames") {
        this.framesInput.classList.add("field-error");
      } else if (detail.code === "DuplicateIndex") {
        for (const index of intsIn(detail.message)) this.flagEntry(index);
      } else {
        const m = /^keyframes\[(\d+)\]/.exec(detail.field);
        if (m) {
          const pos = Number(m[1]);
          if (pos < sorted.length) this.flagEntry(sorted[pos]);
        } else if (detail.field === "keyframes") {
          for (const index of intsIn(detail.message)) this.flagEntry(index);
        }
      }
    }
  }

  private flagEntry(frameIndex: number): void {
    const entry = this.timeline.querySelector(
      `[data-index="${frameIndex}"]`,
    ) as HTMLElement | null;
    entry?.classList.add("flagged");
  }

  clearHighlights(): void {
    this.promptInput.classList.remove("field-error");
    this.framesInput.classList.remove("field-error");
    for (const el of this.timeline.querySelectorAll(".flagged")) {
      el.classList.remove("flagged");
    }
    this.hideBanner();
  }

  private showBanner(message: string, retry: (() => void) | null): void {
    this.bannerText.textContent = message;
    this.banner.hidden = false;
    this.retryAction = retry;
    this.bannerRetry.hidden = retry === null;
  }

  private hideBanner(): void {
    this.banner.hidden = true;
    this.retryAction = null;
    this.bannerRetry.hidden = true;
  }
}

function intsIn(message: string): number[] {
  return (message.match(/\d+/g) ?? []).map(Number);
}

async function blobToDataUrl(blob: Blob): Promise<string> {
  const bytes = new Uint8Array(await blob.arrayBuffer());
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return `data:${blob.type || "image/png"};base64,${btoa(binary)}`;
}
