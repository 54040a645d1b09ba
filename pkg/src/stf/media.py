"""Artifact encoding: frame PNGs, control PNGs, contact strips, GIF/MP4.

PNG encoding is the determinism boundary for parity checks: identical pixel
data must yield identical bytes, so all conversions round the same way and
no metadata is attached. MP4 is produced only when an ffmpeg binary exists
on the host; otherwise the video artifact falls back to GIF.
"""

from __future__ import annotations

import io
import shutil
import subprocess
from pathlib import Path

import numpy as np
from PIL import Image

from .pipeline import VideoFrames
from .tween import ControlSequence

GIF_MAGICS = (b"GIF87a", b"GIF89a")


def frame_to_image(frame: np.ndarray) -> Image.Image:
    """(H, W, 3) floats in [0, 1] to an 8-bit RGB image (round-half-away)."""
    arr = (np.clip(frame, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    return Image.fromarray(arr, mode="RGB")


def control_to_image(grid: np.ndarray) -> Image.Image:
    """Binary {0,1} raster to a single-channel image with values {0, 255}."""
    return Image.fromarray(grid.astype(np.uint8) * np.uint8(255), mode="L")


def save_frame_pngs(video: VideoFrames, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(video.frames):
        path = out_dir / f"frame_{i:04d}.png"
        frame_to_image(frame).save(path, format="PNG")
        paths.append(path)
    return paths


def save_control_pngs(control: ControlSequence, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, grid in enumerate(control.frames):
        path = out_dir / f"control_{i:04d}.png"
        control_to_image(grid).save(path, format="PNG")
        paths.append(path)
    return paths


def contact_strip(control: ControlSequence) -> Image.Image:
    """Tile the control frames horizontally: width = frames * W, height = H."""
    h, w = control.resolution
    strip = Image.new("L", (w * len(control.frames), h))
    for i, grid in enumerate(control.frames):
        strip.paste(control_to_image(grid), (i * w, 0))
    return strip


def strip_png_bytes(control: ControlSequence) -> bytes:
    buf = io.BytesIO()
    contact_strip(control).save(buf, format="PNG")
    return buf.getvalue()


def save_contact_strip(control: ControlSequence, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(strip_png_bytes(control))
    return path


def encode_gif(video: VideoFrames, path: Path) -> Path:
    path = Path(path)
    images = [frame_to_image(f) for f in video.frames]
    duration_ms = int(round(1000.0 / video.frame_rate))
    images[0].save(
        path,
        format="GIF",
        save_all=True,
        append_images=images[1:],
        duration=duration_ms,
        loop=0,
    )
    return path


def encode_video(video: VideoFrames, frames_dir: Path, out_dir: Path) -> Path:
    """Write the video artifact: MP4 via ffmpeg when available, else GIF.

    ``frames_dir`` must already hold the numbered frame PNGs (ffmpeg reads
    them instead of re-encoding pixels).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ffmpeg = shutil.which("ffmpeg")
    if ffmpeg:
        mp4 = out_dir / "video.mp4"
        cmd = [
            ffmpeg,
            "-y",
            "-loglevel",
            "error",
            "-framerate",
            str(video.frame_rate),
            "-i",
            str(Path(frames_dir) / "frame_%04d.png"),
            "-pix_fmt",
            "yuv420p",
            str(mp4),
        ]
        try:
            subprocess.run(cmd, check=True, capture_output=True, timeout=300)
            return mp4
        except (subprocess.SubprocessError, OSError):
            pass  # fall back to GIF
    return encode_gif(video, out_dir / "video.gif")


def is_video_magic(data: bytes) -> bool:
    """True when bytes begin like a GIF or an MP4 container."""
    if data[:6] in GIF_MAGICS:
        return True
    return len(data) > 8 and data[4:8] == b"ftyp"
