"""Generation orchestration: guided DDIM over motion-warped frame latents.

The pipeline composes the four model capabilities (text encoder, denoiser,
control branch, decoder) with the tween engine: sketch keyframes become a
per-frame control video, every frame's latent starts as one shared sample
warped along the motion direction, and each DDIM step injects that frame's
control residuals while cross-frame attention anchors appearance to frame 1.

All frames are processed as one batch per timestep so the patched attention
sees the whole clip at once. A pipeline instance must not run two generate()
calls concurrently (the patch mutates module flags).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import torch

from .attention import SCOPE_MAIN, SCOPE_MAIN_PLUS_CONTROL, patch_model, unpatch_model
from .errors import (
    DimensionMismatch,
    ResolutionMismatch,
    ScheduleExhausted,
    StfError,
    ValidationError,
)
from .models import ModelBundle, ResidualStack, ToyControlBranch
from .motion import MotionParams, apply_motion, auto_motion, sample_base_latent
from .sketch import SketchSequence
from .tween import ControlSequence, interpolate_sequence

TRAIN_TIMESTEPS = 1000
BETA_START = 1e-4
BETA_END = 0.02
DEFAULT_STEPS = 20
DEFAULT_GUIDANCE = 7.5
DEFAULT_CONTROL_SCALE = 1.0
FRAME_RATE = 8.0


def train_alphas_bar() -> np.ndarray:
    """Cumulative alpha products over the linear training beta grid (float64)."""
    betas = np.linspace(BETA_START, BETA_END, TRAIN_TIMESTEPS, dtype=np.float64)
    return np.cumprod(1.0 - betas)


class DdimSchedule:
    """Strictly decreasing timestep subset of the training grid, eta = 0."""

    def __init__(self, steps: int, train_timesteps: int = TRAIN_TIMESTEPS):
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if steps > train_timesteps:
            raise ValueError("steps cannot exceed the training grid")
        grid = np.linspace(train_timesteps - 1, 0, steps)
        self.timesteps: tuple[int, ...] = tuple(int(t) for t in np.round(grid).astype(int))
        if any(b >= a for a, b in zip(self.timesteps, self.timesteps[1:])):
            raise ValueError("schedule timesteps must be strictly decreasing")
        alphas = train_alphas_bar()
        self._pairs: dict[int, tuple[float, float]] = {}
        for i, t in enumerate(self.timesteps):
            nxt = self.timesteps[i + 1] if i + 1 < steps else None
            a_prev = float(alphas[nxt]) if nxt is not None else 1.0
            self._pairs[t] = (float(alphas[t]), a_prev)

    def __len__(self) -> int:
        return len(self.timesteps)

    def pair(self, timestep: int) -> tuple[float, float]:
        """(alpha_bar_t, alpha_bar_prev) for a scheduled timestep."""
        try:
            return self._pairs[timestep]
        except KeyError:
            raise ScheduleExhausted(
                f"timestep {timestep} is not on the schedule {self.timesteps}"
            ) from None


def encode_prompt(
    bundle: ModelBundle, prompt: str, negative_prompt: str = "", strict: bool = False
) -> tuple[torch.Tensor, torch.Tensor]:
    """Conditional and unconditional embeddings, identical shapes."""
    if not prompt:
        raise ValidationError.single("prompt", "prompt must be non-empty")
    cond = bundle.text_encoder.encode(prompt, strict=strict)
    uncond = bundle.text_encoder.encode(negative_prompt, strict=strict)
    return cond, uncond


def control_residuals(
    branch: ToyControlBranch,
    latent: torch.Tensor,
    timestep: int,
    embedding: torch.Tensor,
    control_image: Union[np.ndarray, torch.Tensor],
    control_scale: float = 1.0,
) -> ResidualStack:
    """Control-branch residuals for a latent batch, scaled by control_scale.

    `control_image` may be a single (H, W) binary raster or a prepared
    (N, 1, H, W) float tensor; resolution must be 8x the latent dims.
    """
    if latent.ndim == 3:
        latent = latent.unsqueeze(0)
    cond = _control_tensor(control_image, batch=latent.shape[0])
    stack = branch(latent, timestep, embedding, cond)
    return stack.scaled(float(control_scale))


def _control_tensor(
    control_image: Union[np.ndarray, torch.Tensor], batch: int
) -> torch.Tensor:
    if isinstance(control_image, torch.Tensor):
        tens = control_image.float()
        if tens.ndim == 2:
            tens = tens.unsqueeze(0).unsqueeze(0)
    else:
        arr = np.asarray(control_image, dtype=np.float32)
        if arr.ndim != 2:
            raise DimensionMismatch(
                f"control raster must be 2D, got shape {arr.shape}"
            )
        tens = torch.from_numpy(arr).unsqueeze(0).unsqueeze(0)
    if tens.shape[0] == 1 and batch > 1:
        tens = tens.expand(batch, -1, -1, -1)
    if tens.shape[0] != batch:
        raise DimensionMismatch(
            f"control batch {tens.shape[0]} does not match latent batch {batch}"
        )
    return tens


def denoise_step(
    eps_model: Callable[..., torch.Tensor],
    latents: torch.Tensor,
    timestep: int,
    embeddings: tuple[torch.Tensor, torch.Tensor],
    residuals: Optional[ResidualStack],
    guidance_scale: float,
    schedule: DdimSchedule,
) -> torch.Tensor:
    """One guided DDIM update (eta = 0) applied to the whole frame batch.

    eps = eps_uncond + g * (eps_cond - eps_uncond); g = 0 and g = 1 reduce
    exactly to the single-branch predictions. Residuals (already scaled) are
    injected into both branches.
    """
    cond, uncond = embeddings
    if residuals is not None and residuals.down[0].shape[0] != latents.shape[0]:
        raise DimensionMismatch(
            f"residual batch {residuals.down[0].shape[0]} does not match "
            f"{latents.shape[0]} frames"
        )
    a_t, a_prev = schedule.pair(timestep)
    g = float(guidance_scale)
    if g == 0.0:
        eps = eps_model(latents, timestep, uncond, residuals)
    elif g == 1.0:
        eps = eps_model(latents, timestep, cond, residuals)
    else:
        eps_c = eps_model(latents, timestep, cond, residuals)
        eps_u = eps_model(latents, timestep, uncond, residuals)
        eps = eps_u + g * (eps_c - eps_u)
    x0 = (latents - math.sqrt(1.0 - a_t) * eps) / math.sqrt(a_t)
    return math.sqrt(a_prev) * x0 + math.sqrt(1.0 - a_prev) * eps


@dataclass(frozen=True)
class GenerationConfig:
    """Every knob of a generation run."""

    total_frames: int
    resolution: tuple[int, int]
    steps: int = DEFAULT_STEPS
    guidance_scale: float = DEFAULT_GUIDANCE
    control_scale: float = DEFAULT_CONTROL_SCALE
    seed: int = 0
    band: float = 1.0
    motion: Union[MotionParams, str] = "auto"

    def __post_init__(self):
        h, w = self.resolution
        if h <= 0 or w <= 0 or h % 8 or w % 8:
            raise ValidationError.single(
                "resolution", f"resolution must be positive multiples of 8, got {h}x{w}"
            )
        if self.total_frames < 1:
            raise ValidationError.single("total_frames", "total_frames must be >= 1")
        if self.steps < 1:
            raise ValidationError.single("steps", "steps must be >= 1")
        if self.guidance_scale < 0:
            raise ValidationError.single("guidance_scale", "guidance_scale must be >= 0")
        if not 0.0 <= self.control_scale <= 2.0:
            raise ValidationError.single(
                "control_scale", "control_scale must lie in [0, 2]"
            )
        if self.band <= 0:
            raise ValidationError.single("band", "band must be > 0")
        if isinstance(self.motion, str) and self.motion != "auto":
            raise ValidationError.single(
                "motion", f"motion must be 'auto' or explicit params, got {self.motion!r}"
            )


@dataclass(frozen=True)
class GenerationRequest:
    """A full job description: prompt, keyframes, and config."""

    prompt: str
    negative_prompt: str
    keyframes: SketchSequence
    config: GenerationConfig

    def __post_init__(self):
        if not self.prompt:
            raise ValidationError.single("prompt", "prompt must be non-empty")
        if self.keyframes.resolution != self.config.resolution:
            raise ValidationError.single(
                "keyframes",
                f"keyframe resolution {self.keyframes.resolution} does not match "
                f"config resolution {self.config.resolution}",
            )
        if self.keyframes.total_frames != self.config.total_frames:
            raise ValidationError.single(
                "total_frames",
                "keyframe sequence and config disagree on total_frames",
            )


@dataclass(frozen=True)
class VideoFrames:
    """Decoded output clip: (H, W, 3) rasters with values in [0, 1]."""

    frames: tuple[np.ndarray, ...]
    frame_rate: float = FRAME_RATE

    def __post_init__(self):
        for i, f in enumerate(self.frames):
            if f.ndim != 3 or f.shape[2] != 3:
                raise DimensionMismatch(f"frame {i} has shape {f.shape}, want (H, W, 3)")
            if f.min() < 0.0 or f.max() > 1.0:
                raise ValueError(f"frame {i} has values outside [0, 1]")

    def __len__(self) -> int:
        return len(self.frames)

    def as_array(self) -> np.ndarray:
        return np.stack(self.frames, axis=0)


def _with_context(exc: StfError, context: str) -> StfError:
    if exc.args:
        exc.args = (f"{context}: {exc.args[0]}",) + exc.args[1:]
    else:
        exc.args = (context,)
    return exc


class ControlPipeline:
    """Runs generate(); holds a frozen ModelBundle. Not reentrant."""

    def __init__(self, bundle: ModelBundle):
        self.bundle = bundle

    def tween(self, request: GenerationRequest) -> ControlSequence:
        return interpolate_sequence(request.keyframes, band=request.config.band)

    def generate(
        self,
        request: GenerationRequest,
        *,
        cross_frame: bool = True,
        patch_control_branch: bool = False,
        step_hook: Optional[Callable] = None,
        progress: Optional[Callable[[int, int, int], None]] = None,
    ) -> VideoFrames:
        """Full pipeline: tween, warp latents, guided DDIM loop, decode.

        step_hook(step_index, timestep, latents, control_tensor, residuals)
        is called once per step before the denoiser update, for inspection.
        Deterministic for fixed request, seed, and weights.
        """
        cfg = request.config
        try:
            control = self.tween(request)
        except StfError as exc:
            raise _with_context(exc, "interpolating control frames")

        motion = cfg.motion
        if isinstance(motion, str):  # "auto"
            latent_w = cfg.resolution[1] // 8
            motion = auto_motion(control, cfg.total_frames, latent_w)

        with torch.inference_mode():
            base = sample_base_latent(cfg.seed, self.bundle.latent_shape(cfg.resolution))
            latents = apply_motion(base, cfg.total_frames, motion)

            cond, uncond = encode_prompt(self.bundle, request.prompt, request.negative_prompt)
            control_tensor = torch.from_numpy(
                np.stack([f.astype(np.float32) for f in control.frames])
            ).unsqueeze(1)

            scope = SCOPE_MAIN_PLUS_CONTROL if patch_control_branch else SCOPE_MAIN
            branch = self.bundle.control_branch if patch_control_branch else None
            if cross_frame:
                patch_model(self.bundle.denoiser, scope=scope, control_branch=branch)
            schedule = DdimSchedule(cfg.steps)
            try:
                for i, t in enumerate(schedule.timesteps):
                    try:
                        residuals = control_residuals(
                            self.bundle.control_branch,
                            latents,
                            t,
                            cond,
                            control_tensor,
                            cfg.control_scale,
                        )
                        if step_hook is not None:
                            step_hook(i, t, latents, control_tensor, residuals)
                        latents = denoise_step(
                            self.bundle.denoiser,
                            latents,
                            t,
                            (cond, uncond),
                            residuals,
                            cfg.guidance_scale,
                            schedule,
                        )
                    except StfError as exc:
                        raise _with_context(exc, f"denoise step {i} (timestep {t})")
                    if progress is not None:
                        progress(i + 1, len(schedule), t)
            finally:
                if cross_frame:
                    unpatch_model(self.bundle.denoiser, control_branch=branch)

            pixels = self.bundle.decoder(latents)  # (N, 3, H, W) in [0, 1]

        arr = pixels.clamp(0.0, 1.0).permute(0, 2, 3, 1).numpy()
        return VideoFrames(frames=tuple(arr[k].copy() for k in range(arr.shape[0])))
