"""HTTP job service: submit generation requests, poll status, fetch artifacts.

Persistence is one directory per job (request.json exactly as submitted,
status.json, artifacts/) under a jobs root; no database. A single worker
thread drains a FIFO queue, so at most one job is ever running. Status
writes are atomic (write-temp-then-rename), and a startup sweep marks any
job left in "running" by a crash as failed.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import uuid
from contextlib import asynccontextmanager
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, Response

from .errors import StfError, ValidationError
from .request import parse_request_document
from .runner import execute_request
from .tween import interpolate_sequence
from . import media

DEFAULT_JOBS_DIR = "jobs"

_TERMINAL = {"done", "failed"}


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


class JobStore:
    """Directory-per-job persistence with atomic status writes."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def artifacts_dir(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "artifacts"

    def create(self, raw_body: bytes) -> dict:
        job_id = uuid.uuid4().hex
        jdir = self.job_dir(job_id)
        jdir.mkdir(parents=True)
        # Stored byte-identical to the submission, for auditability.
        (jdir / "request.json").write_bytes(raw_body)
        record = {
            "job_id": job_id,
            "status": "queued",
            "created_at": _utcnow(),
            "started_at": None,
            "finished_at": None,
            "artifact_paths": {},
            "error_message": None,
        }
        self._write_status(job_id, record)
        return record

    def load(self, job_id: str) -> dict | None:
        path = self.job_dir(job_id) / "status.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def load_request(self, job_id: str) -> dict:
        return json.loads((self.job_dir(job_id) / "request.json").read_text())

    def update(self, job_id: str, **fields) -> dict:
        record = self.load(job_id)
        if record is None:
            raise KeyError(job_id)
        record.update(fields)
        self._write_status(job_id, record)
        return record

    def _write_status(self, job_id: str, record: dict) -> None:
        path = self.job_dir(job_id) / "status.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(record, indent=2))
        os.replace(tmp, path)

    def all_records(self) -> list[dict]:
        records = []
        for child in self.root.iterdir():
            if child.is_dir() and (child / "status.json").exists():
                records.append(json.loads((child / "status.json").read_text()))
        records.sort(key=lambda r: r["created_at"])
        return records

    def sweep_orphans(self) -> list[str]:
        """Mark jobs left running by a dead process as failed (restart note)."""
        swept = []
        for record in self.all_records():
            if record["status"] == "running":
                self.update(
                    record["job_id"],
                    status="failed",
                    finished_at=_utcnow(),
                    error_message="orphaned by service restart while running",
                )
                swept.append(record["job_id"])
        return swept

    def pending(self) -> list[str]:
        """Queued job ids in submission order (for requeueing on startup)."""
        return [r["job_id"] for r in self.all_records() if r["status"] == "queued"]


class Worker:
    """Single worker thread: drains the queue FIFO, one job at a time."""

    def __init__(self, store: JobStore):
        self.store = store
        self.queue: queue.Queue = queue.Queue()
        self._thread: threading.Thread | None = None
        self._stop = object()

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, name="stf-worker", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.queue.put(self._stop)
        if self._thread is not None:
            self._thread.join(timeout=5)

    def submit(self, job_id: str) -> None:
        self.queue.put(job_id)

    @property
    def alive(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def _loop(self) -> None:
        while True:
            item = self.queue.get()
            if item is self._stop:
                return
            self._run_job(item)

    def _run_job(self, job_id: str) -> None:
        record = self.store.load(job_id)
        if record is None or record["status"] != "queued":
            return  # swept or already handled
        self.store.update(job_id, status="running", started_at=_utcnow())
        try:
            doc = self.store.load_request(job_id)
            artifacts = execute_request(doc, self.store.artifacts_dir(job_id))
            self.store.update(
                job_id,
                status="done",
                finished_at=_utcnow(),
                artifact_paths={
                    "frames_dir": artifacts["frames_dir"],
                    "control_strip": artifacts["control_strip"],
                    "video": artifacts["video"],
                    "overview": artifacts["overview"],
                    "stats": artifacts["stats"],
                },
            )
        except Exception as exc:  # per-job failures must not kill the loop
            self.store.update(
                job_id,
                status="failed",
                finished_at=_utcnow(),
                error_message=f"{type(exc).__name__}: {exc}",
            )


def _validation_response(exc: ValidationError) -> JSONResponse:
    return JSONResponse(
        status_code=400, content={"error": "ValidationError", "details": exc.details}
    )


def create_app(jobs_dir: str | Path = DEFAULT_JOBS_DIR) -> FastAPI:
    store = JobStore(Path(jobs_dir))
    worker = Worker(store)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        store.sweep_orphans()
        worker.start()
        for job_id in store.pending():
            worker.submit(job_id)
        yield
        worker.stop()

    app = FastAPI(title="stf service", lifespan=lifespan)
    app.state.store = store
    app.state.worker = worker

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "worker_alive": worker.alive, "jobs_dir": str(store.root)}

    @app.post("/jobs", status_code=202)
    async def submit_job(request: Request):
        raw = await request.body()
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            return _validation_response(
                ValidationError.single("", f"request body is not valid JSON: {exc}")
            )
        try:
            parse_request_document(doc)
        except ValidationError as exc:
            return _validation_response(exc)
        record = store.create(raw)
        worker.submit(record["job_id"])
        return {"job_id": record["job_id"], "status": "queued"}

    @app.get("/jobs/{job_id}")
    def get_status(job_id: str):
        record = store.load(job_id)
        if record is None:
            return JSONResponse(status_code=404, content={"error": "UnknownJob"})
        body = dict(record)
        body["request"] = store.load_request(job_id)
        return body

    @app.post("/preview/tween")
    async def preview_tween(request: Request):
        raw = await request.body()
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            return _validation_response(
                ValidationError.single("", f"request body is not valid JSON: {exc}")
            )
        try:
            parsed = parse_request_document(doc)
            control = interpolate_sequence(
                parsed.request.keyframes, band=parsed.request.config.band
            )
        except ValidationError as exc:
            return _validation_response(exc)
        except StfError as exc:
            return _validation_response(
                ValidationError.single("keyframes", str(exc), code=type(exc).__name__)
            )
        return Response(
            content=media.strip_png_bytes(control),
            media_type="image/png",
            headers={"X-Frame-Count": str(len(control.frames))},
        )

    @app.get("/jobs/{job_id}/video")
    def get_video(job_id: str):
        record = store.load(job_id)
        if record is None:
            return JSONResponse(status_code=404, content={"error": "UnknownJob"})
        if record["status"] != "done":
            return JSONResponse(
                status_code=409,
                content={
                    "error": "NotReady",
                    "status": record["status"],
                    "error_message": record.get("error_message"),
                },
            )
        video_path = Path(record["artifact_paths"]["video"])
        media_type = "video/mp4" if video_path.suffix == ".mp4" else "image/gif"
        return FileResponse(video_path, media_type=media_type)

    return app


def serve(host: str, port: int, jobs_dir: str | Path) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(jobs_dir), host=host, port=port, log_level="warning")
