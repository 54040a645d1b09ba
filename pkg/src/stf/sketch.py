"""Sketch keyframe ingestion: decode, rasterize, normalize, validate.

The canonical sketch form is a binary H×W grid (uint8, values {0, 1}) with
bright strokes (1) on a dark background (0), pinned to a frame index on the
output-video timeline.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DuplicateIndex,
    EmptyKeyframes,
    EmptySketch,
    IndexOutOfRange,
    MixedResolution,
    UndecodableImage,
    UnsortedIndices,
)

# 8-bit midpoint: luminance >= 128 counts as bright (strict 50% threshold).
_LUMA_THRESHOLD = 128


@dataclass(frozen=True)
class KeyframeSketch:
    """Binary scribble raster pinned to a frame index."""

    grid: np.ndarray  # (H, W) uint8 in {0, 1}, 1 = stroke
    frame_index: int

    def __post_init__(self):
        if self.frame_index < 0:
            raise IndexOutOfRange(f"frame_index must be >= 0, got {self.frame_index}")
        grid = np.asarray(self.grid)
        if grid.ndim != 2:
            raise ValueError(f"sketch grid must be 2D, got shape {grid.shape}")
        if not np.isin(grid, (0, 1)).all():
            raise ValueError("sketch grid values must be exactly 0 or 1")
        if int(grid.sum()) == 0:
            raise EmptySketch("sketch has no stroke pixels")
        object.__setattr__(self, "grid", grid.astype(np.uint8))

    @property
    def resolution(self) -> tuple[int, int]:
        return self.grid.shape  # (H, W)

    @property
    def stroke_count(self) -> int:
        return int(self.grid.sum())


@dataclass(frozen=True)
class SketchSequence:
    """Ordered keyframes on a clip of ``total_frames`` frames."""

    keyframes: tuple[KeyframeSketch, ...]
    total_frames: int
    resolution: tuple[int, int] = field(init=False)

    def __post_init__(self):
        if not self.keyframes:
            raise EmptyKeyframes("sequence needs at least one keyframe")
        if self.total_frames < 1:
            raise IndexOutOfRange(f"total_frames must be >= 1, got {self.total_frames}")
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        object.__setattr__(self, "resolution", self.keyframes[0].resolution)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(k.frame_index for k in self.keyframes)


def load_sketch(
    data: bytes, frame_index: int, target_resolution: tuple[int, int]
) -> KeyframeSketch:
    """Decode image bytes (PNG/JPEG) into a canonical binary sketch.

    Pipeline: decode -> grayscale -> nearest-neighbor resize -> threshold at
    50% luminance -> polarity normalization (if strokes would be the majority
    class, invert so strokes stay the minority, bright-on-dark).

    Raises UndecodableImage for corrupt bytes and EmptySketch when no stroke
    pixels survive normalization.
    """
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise UndecodableImage(f"could not decode image bytes: {exc}") from exc

    h, w = target_resolution
    gray = img.convert("L")
    if gray.size != (w, h):
        gray = gray.resize((w, h), Image.NEAREST)
    arr = np.asarray(gray)
    grid = (arr >= _LUMA_THRESHOLD).astype(np.uint8)

    if grid.sum() * 2 > grid.size:
        grid = 1 - grid
    if grid.sum() == 0:
        raise EmptySketch("no stroke pixels after normalization")
    return KeyframeSketch(grid=grid, frame_index=frame_index)


def encode_sketch(sketch: KeyframeSketch) -> bytes:
    """Serialize to the canonical form: single-channel 8-bit PNG, values {0, 255}."""
    img = Image.fromarray(sketch.grid * np.uint8(255), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def rasterize_strokes(
    strokes: list[list[tuple[float, float]]],
    stroke_width: float,
    target_resolution: tuple[int, int],
    frame_index: int = 0,
) -> KeyframeSketch:
    """Rasterize polylines in normalized [0,1]² coordinates.

    A pixel is a stroke iff its center lies within ``stroke_width / 2`` of any
    polyline segment (Euclidean distance in pixel units). Polylines need at
    least two points each; x maps to columns, y to rows.
    """
    if stroke_width <= 0:
        raise ValueError(f"stroke_width must be > 0, got {stroke_width}")
    if not strokes:
        raise EmptySketch("no strokes to rasterize")
    for i, pl in enumerate(strokes):
        if len(pl) < 2:
            raise ValueError(f"polyline {i} has {len(pl)} point(s); need >= 2")

    h, w = target_resolution
    cy, cx = np.mgrid[0:h, 0:w]
    px = cx + 0.5  # pixel centers
    py = cy + 0.5
    radius = stroke_width / 2.0
    mask = np.zeros((h, w), dtype=bool)

    for pl in strokes:
        pts = np.asarray(pl, dtype=np.float64)
        xs = pts[:, 0] * w
        ys = pts[:, 1] * h
        for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
            mask |= _segment_mask(px, py, x0, y0, x1, y1, radius)

    if not mask.any():
        raise EmptySketch("rasterization covered no pixels")
    return KeyframeSketch(grid=mask.astype(np.uint8), frame_index=frame_index)


def _segment_mask(px, py, x0, y0, x1, y1, radius):
    """Pixels whose centers are within radius of segment (x0,y0)-(x1,y1)."""
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        d2 = (px - x0) ** 2 + (py - y0) ** 2
    else:
        t = ((px - x0) * dx + (py - y0) * dy) / seg2
        t = np.clip(t, 0.0, 1.0)
        d2 = (px - (x0 + t * dx)) ** 2 + (py - (y0 + t * dy)) ** 2
    return d2 <= radius * radius


def validate_sequence(
    keyframes: list[KeyframeSketch], total_frames: int
) -> SketchSequence:
    """Assemble keyframes into a validated SketchSequence.

    Keyframes must arrive sorted by strictly increasing frame index, share one
    resolution, and all fit within ``total_frames``. Input grids are not
    copied or mutated.
    """
    if not keyframes:
        raise EmptyKeyframes("at least one keyframe is required")

    indices = [k.frame_index for k in keyframes]
    seen: set[int] = set()
    for idx in indices:
        if idx in seen:
            raise DuplicateIndex(f"frame index {idx} appears more than once")
        seen.add(idx)
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise UnsortedIndices(f"keyframe indices {indices} are not strictly increasing")
    if indices[-1] >= total_frames:
        raise IndexOutOfRange(
            f"keyframe index {indices[-1]} >= total_frames {total_frames}"
        )

    res = keyframes[0].resolution
    for k in keyframes:
        if k.resolution != res:
            raise MixedResolution(f"resolutions {res} and {k.resolution} mixed")

    return SketchSequence(keyframes=tuple(keyframes), total_frames=total_frames)
