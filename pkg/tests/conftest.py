import base64

import numpy as np
import pytest

from stf.sketch import KeyframeSketch, encode_sketch, rasterize_strokes, validate_sequence

BEACH_PROMPT = "A man walking on the beach in front of the ocean"

# Stick figure polylines in normalized coordinates, centered on x = 0.5.
STICK_FIGURE_STROKES = [
    # head: octagon around (0.5, 0.22), radius 0.07
    [
        (0.57, 0.22), (0.5495, 0.2695), (0.5, 0.29), (0.4505, 0.2695),
        (0.43, 0.22), (0.4505, 0.1705), (0.5, 0.15), (0.5495, 0.1705),
        (0.57, 0.22),
    ],
    [(0.5, 0.29), (0.5, 0.58)],  # torso
    [(0.36, 0.42), (0.64, 0.42)],  # arms
    [(0.5, 0.58), (0.38, 0.8)],  # left leg
    [(0.5, 0.58), (0.62, 0.8)],  # right leg
]


def shift_columns(grid: np.ndarray, dx: int) -> np.ndarray:
    """Exact integer column shift with zero fill (never wraps)."""
    out = np.zeros_like(grid)
    w = grid.shape[1]
    if dx >= 0:
        out[:, dx:] = grid[:, : w - dx]
    else:
        out[:, : w + dx] = grid[:, -dx:]
    return out


def stick_figure(center_col: int, resolution=(128, 128), frame_index=0) -> KeyframeSketch:
    """A stick figure whose centroid column sits near center_col.

    All figures at one resolution are exact translations of each other, so
    centroid displacement between two of them equals the column offset.
    """
    h, w = resolution
    template = rasterize_strokes(STICK_FIGURE_STROKES, 2.0, resolution).grid
    grid = shift_columns(template, center_col - w // 2)
    return KeyframeSketch(grid=grid, frame_index=frame_index)


def stick_trio(resolution=(128, 128), indices=(0, 4, 8)):
    """Left / middle / right stick figures pinned to the given indices."""
    h, w = resolution
    cols = (w // 5, w // 2, w - w // 5)
    return [
        stick_figure(col, resolution, frame_index=idx)
        for col, idx in zip(cols, indices)
    ]


def random_sketch(rng: np.random.Generator, resolution=(64, 64), frame_index=0) -> KeyframeSketch:
    """A sparse random scribble: a handful of short strokes plus dots."""
    h, w = resolution
    grid = np.zeros(resolution, dtype=np.uint8)
    n_points = int(rng.integers(10, 60))
    ys = rng.integers(0, h, n_points)
    xs = rng.integers(0, w, n_points)
    grid[ys, xs] = 1
    return KeyframeSketch(grid=grid, frame_index=frame_index)


def keyframe_doc_entry(sketch: KeyframeSketch) -> dict:
    return {
        "frame_index": sketch.frame_index,
        "png_base64": base64.b64encode(encode_sketch(sketch)).decode("ascii"),
    }


def toy_request_doc(resolution=(64, 64), total_frames=4, steps=5, seed=7, model="toy:7"):
    """The small end-to-end scenario as a JSON request document."""
    h, w = resolution
    left = stick_figure(w // 4, resolution, frame_index=0)
    right = stick_figure(3 * w // 4, resolution, frame_index=total_frames - 1)
    return {
        "prompt": BEACH_PROMPT,
        "total_frames": total_frames,
        "resolution": [h, w],
        "steps": steps,
        "seed": seed,
        "model": model,
        "keyframes": [keyframe_doc_entry(left), keyframe_doc_entry(right)],
    }


@pytest.fixture
def beach_prompt():
    return BEACH_PROMPT


@pytest.fixture
def trio_sequence():
    return validate_sequence(stick_trio(), total_frames=9)
