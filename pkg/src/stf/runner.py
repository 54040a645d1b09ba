"""Shared job execution: one code path for the CLI and the service worker.

Both front doors hand a parsed request document to execute_request, which
runs the pipeline and writes an identical artifact tree. That shared path is
what makes CLI and service outputs bit-identical for identical requests.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Callable, Optional

import torch

from . import media, report
from .models import load_models
from .pipeline import ControlPipeline
from .request import RequestDocument, parse_request_document
from .tween import interpolate_sequence


def execute_tween(doc: RequestDocument, out_dir: Path) -> dict:
    """Interpolation only: control PNGs, contact strip, stats CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = doc.request.config
    control = interpolate_sequence(doc.request.keyframes, band=cfg.band)
    control_paths = media.save_control_pngs(control, out_dir / "control")
    strip = media.save_contact_strip(control, out_dir / "control_strip.png")
    stats = report.write_frame_stats(control, None, out_dir / "frames.csv")
    return {
        "frame_count": len(control.frames),
        "control_dir": str(control_paths[0].parent),
        "control_strip": str(strip),
        "stats": str(stats),
    }


def execute_request(
    doc_json: dict,
    out_dir: Path,
    *,
    progress: Optional[Callable[[int, int, int], None]] = None,
) -> dict:
    """Run a full generation job and write every artifact under out_dir.

    Layout: frames/frame_%04d.png, control/control_%04d.png,
    control_strip.png, video.gif|mp4, overview.png, frames.csv. Returns the
    artifact path map plus timings. Raises ValidationError for bad documents
    and other StfError subtypes for pipeline failures.
    """
    torch.set_num_threads(1)  # keep outputs reproducible across hosts/processes
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    doc = doc_json if isinstance(doc_json, RequestDocument) else parse_request_document(doc_json)
    request = doc.request
    cfg = request.config

    timings: dict[str, float] = {}
    t0 = time.monotonic()
    bundle = load_models(doc.model)
    timings["load_models_s"] = round(time.monotonic() - t0, 4)

    pipeline = ControlPipeline(bundle)
    t0 = time.monotonic()
    control = pipeline.tween(request)
    timings["tween_s"] = round(time.monotonic() - t0, 4)

    t0 = time.monotonic()
    video = pipeline.generate(request, progress=progress)
    timings["generate_s"] = round(time.monotonic() - t0, 4)

    t0 = time.monotonic()
    frame_paths = media.save_frame_pngs(video, out_dir / "frames")
    control_paths = media.save_control_pngs(control, out_dir / "control")
    strip = media.save_contact_strip(control, out_dir / "control_strip.png")
    video_path = media.encode_video(video, out_dir / "frames", out_dir)
    overview = report.render_overview(
        request.keyframes, control, video, out_dir / "overview.png", request.prompt
    )
    stats = report.write_frame_stats(control, video, out_dir / "frames.csv")
    timings["export_s"] = round(time.monotonic() - t0, 4)

    return {
        "frame_count": len(video.frames),
        "frames_dir": str(frame_paths[0].parent),
        "control_dir": str(control_paths[0].parent),
        "control_strip": str(strip),
        "video": str(video_path),
        "overview": str(overview),
        "stats": str(stats),
        "timings": timings,
    }
