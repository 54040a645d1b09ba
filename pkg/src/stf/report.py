"""Run reports: an overview figure plus per-frame stats as CSV.

The overview mirrors the four-row layout used to present results: prompt as
the title, keyframe sketches, interpolated control frames, and decoded
output frames. Stats go to a delimited file next to it so downstream tools
can plot motion without re-reading pixels.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import VideoFrames
from .sketch import SketchSequence
from .tween import ControlSequence

_MAX_COLUMNS = 8


def _sample_indices(n: int, limit: int = _MAX_COLUMNS) -> list[int]:
    if n <= limit:
        return list(range(n))
    return sorted({int(round(x)) for x in np.linspace(0, n - 1, limit)})


def render_overview(
    keyframes: SketchSequence,
    control: ControlSequence,
    video: VideoFrames | None,
    path: Path,
    prompt: str = "",
) -> Path:
    """Save the keyframes / control / output overview figure as a PNG."""
    cols = _sample_indices(len(control.frames))
    rows = 3 if video is not None else 2
    width = max(len(cols), len(keyframes.keyframes))
    fig, axes = plt.subplots(rows, width, figsize=(1.6 * width, 1.8 * rows), squeeze=False)

    for ax in axes.ravel():
        ax.set_axis_off()
    for j, kf in enumerate(keyframes.keyframes):
        ax = axes[0][j]
        ax.imshow(kf.grid, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        ax.set_title(f"key @{kf.frame_index}", fontsize=8)
    for j, idx in enumerate(cols):
        ax = axes[1][j]
        ax.imshow(control.frames[idx], cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        ax.set_title(f"control {idx}", fontsize=8)
    if video is not None:
        for j, idx in enumerate(cols):
            if idx >= len(video.frames):
                continue
            ax = axes[2][j]
            ax.imshow(video.frames[idx], interpolation="nearest")
            ax.set_title(f"frame {idx}", fontsize=8)

    if prompt:
        fig.suptitle(prompt, fontsize=10)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, bbox_inches="tight")
    plt.close(fig)
    return path


def write_frame_stats(
    control: ControlSequence, video: VideoFrames | None, path: Path
) -> Path:
    """Per-frame CSV: stroke pixels, stroke centroid, output intensity stats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cents = control.centroids()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["frame", "control_strokes", "centroid_col", "centroid_row",
             "out_min", "out_max", "out_mean"]
        )
        for i, grid in enumerate(control.frames):
            row = [
                i,
                int(grid.sum()),
                f"{cents[i][0]:.4f}",
                f"{cents[i][1]:.4f}",
            ]
            if video is not None and i < len(video.frames):
                frame = video.frames[i]
                row += [f"{frame.min():.6f}", f"{frame.max():.6f}", f"{frame.mean():.6f}"]
            else:
                row += ["", "", ""]
            writer.writerow(row)
    return path
