"""Keyframe tweening: distance-field morphing between consecutive sketches.

Every sketch gets an exact Euclidean distance field (zero on strokes,
1-Lipschitz everywhere). In-between frames come from blending the two
bracketing fields and band-thresholding the result back to a binary raster.

The blend interpolates in the squared-distance domain,
``sqrt((1-alpha) * a**2 + alpha * b**2)``, rather than mixing the fields
linearly. A linear mix of two distance fields is constant along the corridor
between distant shapes, so its minimum never tracks the interpolated
position and band extraction goes empty mid-morph; the quadratic mean keeps
a strict minimum at the blended location while still being non-negative and
1-Lipschitz (power-mean inequality). Extraction thresholds at ``band`` above
the field minimum, which reduces to a plain ``value <= band`` cut for true
distance fields (their minimum is 0 on strokes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import AlphaOutOfRange, EmptyResult, EmptySketch, ResolutionMismatch
from .sketch import KeyframeSketch, SketchSequence

DEFAULT_BAND = 1.0


@dataclass(frozen=True)
class ControlSequence:
    """One binary control frame per output frame."""

    frames: tuple[np.ndarray, ...]  # each (H, W) uint8 in {0, 1}
    resolution: tuple[int, int] = field(init=False)

    def __post_init__(self):
        if not self.frames:
            raise EmptyResult("control sequence has no frames")
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "resolution", self.frames[0].shape)

    def __len__(self) -> int:
        return len(self.frames)

    def centroids(self) -> np.ndarray:
        """Per-frame stroke centroid as (N, 2) array of (col, row)."""
        out = np.empty((len(self.frames), 2), dtype=np.float64)
        for i, f in enumerate(self.frames):
            ys, xs = np.nonzero(f)
            out[i] = (xs.mean(), ys.mean())
        return out


def distance_transform(sketch: KeyframeSketch) -> np.ndarray:
    """Exact Euclidean distance to the nearest stroke pixel, per pixel.

    Returns a float64 (H, W) field: 0 exactly on strokes, elsewhere the
    minimum over stroke pixels of the Euclidean pixel distance.
    """
    grid = sketch.grid
    if grid.sum() == 0:
        raise EmptySketch("cannot transform an empty sketch")
    # EDT measures nonzero -> nearest zero, so feed the stroke complement.
    return distance_transform_edt(1 - grid)


def blend_fields(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """Interpolate two distance fields; alpha=0 gives a, alpha=1 gives b.

    Quadratic-mean interpolation (see module docstring). Endpoints are
    returned as copies so exactness there never depends on float round-trips.
    """
    if a.shape != b.shape:
        raise ResolutionMismatch(f"field shapes {a.shape} and {b.shape} differ")
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    return np.sqrt((1.0 - alpha) * a * a + alpha * b * b)


def extract_sketch(field: np.ndarray, band: float) -> np.ndarray:
    """Threshold a field back to a binary raster.

    A pixel is a stroke iff its value is within ``band`` of the field
    minimum. For fields produced by distance_transform the minimum is 0, so
    this is exactly ``value <= band``.
    """
    if band < 0:
        raise ValueError(f"band must be >= 0, got {band}")
    grid = (field <= field.min() + band).astype(np.uint8)
    if grid.sum() == 0:
        raise EmptyResult("no pixel within band of the field minimum")
    return grid


def interpolate_sequence(seq: SketchSequence, band: float = DEFAULT_BAND) -> ControlSequence:
    """Produce one control frame per clip frame from the keyframes.

    Keyframe indices emit the keyframe grid verbatim (bit-exact). Frames
    strictly between adjacent keyframes i < j use the field blend at
    alpha = (k - i) / (j - i). Frames before the first keyframe hold the
    first; frames after the last hold the last. Identical bracketing
    keyframes are held verbatim too: a shape morphing to itself is constant,
    and band extraction would otherwise thicken it.
    """
    if band < 0:
        raise ValueError(f"band must be >= 0, got {band}")

    by_index = {k.frame_index: k for k in seq.keyframes}
    indices = list(seq.indices)
    fields: dict[int, np.ndarray] = {}

    def field_at(idx: int) -> np.ndarray:
        if idx not in fields:
            fields[idx] = distance_transform(by_index[idx])
        return fields[idx]

    frames: list[np.ndarray] = []
    for k in range(seq.total_frames):
        if k in by_index:
            frames.append(by_index[k].grid)
            continue
        if k < indices[0]:
            frames.append(by_index[indices[0]].grid)
            continue
        if k > indices[-1]:
            frames.append(by_index[indices[-1]].grid)
            continue
        pos = next(p for p in range(len(indices) - 1) if indices[p] < k < indices[p + 1])
        i, j = indices[pos], indices[pos + 1]
        if np.array_equal(by_index[i].grid, by_index[j].grid):
            frames.append(by_index[i].grid)
            continue
        alpha = (k - i) / (j - i)
        blended = blend_fields(field_at(i), field_at(j), alpha)
        try:
            frames.append(extract_sketch(blended, band))
        except EmptyResult as exc:
            raise EmptyResult(f"frame {k}: {exc}", frame_index=k) from exc

    return ControlSequence(frames=tuple(frames))
