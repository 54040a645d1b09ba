"""Per-frame latent initialization and global motion warping.

One base latent is sampled from the seed; every frame k gets that latent
translated by ``lambda * (k - 1)`` latent-pixels along a unit direction
(frame 1 stays untouched). Warping is bilinear with border replication, so
integer offsets are exact gathers and a zero offset is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import InvalidFrameIndex
from .tween import ControlSequence

# Displacements below this (in control-image pixels) count as "no motion".
_MIN_DISPLACEMENT_PX = 0.5


@dataclass(frozen=True)
class MotionParams:
    """Global motion: magnitude (latent-pixels per frame step) and direction."""

    lam: float = 0.0
    direction: tuple[float, float] = (1.0, 0.0)  # (ux, uy), unit when enabled
    enabled: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.enabled:
            norm = math.hypot(*self.direction)
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"direction must be unit length, got norm {norm}")

    @staticmethod
    def disabled() -> "MotionParams":
        return MotionParams(lam=0.0, direction=(1.0, 0.0), enabled=False)


def sample_base_latent(seed: int, shape: tuple[int, int, int]) -> torch.Tensor:
    """Draw the shared base latent: i.i.d. standard normal, seed-determined."""
    c, h, w = shape
    if c <= 0 or h <= 0 or w <= 0:
        raise ValueError(f"latent shape dims must be > 0, got {shape}")
    gen = torch.Generator().manual_seed(seed)
    return torch.randn((c, h, w), generator=gen, dtype=torch.float32)


def motion_offset(frame_k: int, params: MotionParams) -> tuple[float, float]:
    """Offset (dx, dy) for 1-based frame k: lambda * (k - 1) * direction."""
    if frame_k < 1:
        raise InvalidFrameIndex(f"frame index is 1-based, got {frame_k}")
    if not params.enabled:
        return (0.0, 0.0)
    step = params.lam * (frame_k - 1)
    return (step * params.direction[0], step * params.direction[1])


def warp(latent: torch.Tensor, offset: tuple[float, float]) -> torch.Tensor:
    """Translate latent content by (dx, dy) with bilinear border-replicated sampling.

    Sampling is implemented as an explicit gather + lerp so that a zero
    offset returns a bit-identical copy and integer offsets are exact shifts
    away from the borders.
    """
    dx, dy = float(offset[0]), float(offset[1])
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise ValueError(f"offset must be finite, got {offset}")
    c, h, w = latent.shape

    # Source coordinate for destination pixel (y, x) is (y - dy, x - dx).
    xs = torch.arange(w, dtype=torch.float64) - dx
    ys = torch.arange(h, dtype=torch.float64) - dy
    x0 = torch.floor(xs)
    y0 = torch.floor(ys)
    fx = (xs - x0).to(latent.dtype)
    fy = (ys - y0).to(latent.dtype)
    x0 = x0.long()
    y0 = y0.long()
    x0c = x0.clamp(0, w - 1)
    x1c = (x0 + 1).clamp(0, w - 1)
    y0c = y0.clamp(0, h - 1)
    y1c = (y0 + 1).clamp(0, h - 1)

    top = latent[:, y0c, :]
    bot = latent[:, y1c, :]
    v00 = top[:, :, x0c]
    v01 = top[:, :, x1c]
    v10 = bot[:, :, x0c]
    v11 = bot[:, :, x1c]

    wx = fx.view(1, 1, w)
    wy = fy.view(1, h, 1)
    top_mix = v00 * (1 - wx) + v01 * wx
    bot_mix = v10 * (1 - wx) + v11 * wx
    return top_mix * (1 - wy) + bot_mix * wy


def apply_motion(
    base: torch.Tensor, total_frames: int, params: MotionParams
) -> torch.Tensor:
    """Stack per-frame warped latents: frames[k] = warp(base, offset(k)).

    Returns (total_frames, C, h, w); frame 1 (index 0) is the base verbatim.
    """
    if total_frames < 1:
        raise ValueError(f"total_frames must be >= 1, got {total_frames}")
    frames = [warp(base, motion_offset(k, params)) for k in range(1, total_frames + 1)]
    return torch.stack(frames, dim=0)


def dump_frame_latents(latents: torch.Tensor, path) -> None:
    """Debug dump: header of little-endian uint32 (C, h, w, N), then float32 data."""
    import struct

    n, c, h, w = latents.shape
    data = latents.to(torch.float32).numpy().astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4I", c, h, w, n))
        fh.write(data)


def infer_direction(control: ControlSequence) -> MotionParams:
    """Default motion direction from the control frames' own movement.

    Direction is the normalized stroke-centroid displacement from first to
    last control frame; motion is disabled when the displacement is under
    half a pixel. Magnitude (lambda) is left at 0 for the caller to set.
    """
    cents = control.centroids()
    delta = cents[-1] - cents[0]
    norm = math.hypot(float(delta[0]), float(delta[1]))
    if norm < _MIN_DISPLACEMENT_PX:
        return MotionParams.disabled()
    return MotionParams(lam=0.0, direction=(float(delta[0]) / norm, float(delta[1]) / norm), enabled=True)


def auto_motion(control: ControlSequence, total_frames: int, latent_width: int) -> MotionParams:
    """Auto mode: inferred direction with a mild default magnitude.

    The default drifts content 12.5% of the latent width across the whole
    clip: lambda = 0.125 * latent_width / (total_frames - 1).
    """
    params = infer_direction(control)
    if not params.enabled or total_frames < 2:
        return params
    lam = 0.125 * latent_width / (total_frames - 1)
    return MotionParams(lam=lam, direction=params.direction, enabled=True)
