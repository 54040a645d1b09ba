"""Cross-frame attention: every frame's queries attend to frame 1's keys/values.

The core ops are pure tensor functions over a (frames N, tokens T, dim d)
layout with frame 1 at index 0. ``patch_model`` rewires a denoising network's
self-attention sites to route through them; text cross-attention sites are
never touched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import DimensionMismatch, EmptyBatch, NoAttentionSites


@dataclass(frozen=True)
class AttentionTensors:
    """Query/key/value stack for one attention invocation, frame-major."""

    q: torch.Tensor  # (N, T, d)
    k: torch.Tensor
    v: torch.Tensor

    def __post_init__(self):
        if self.q.ndim != 3:
            raise DimensionMismatch(f"expected (N, T, d) tensors, got {tuple(self.q.shape)}")
        if self.q.shape != self.k.shape or self.q.shape != self.v.shape:
            raise DimensionMismatch(
                f"q/k/v shapes differ: {tuple(self.q.shape)}, "
                f"{tuple(self.k.shape)}, {tuple(self.v.shape)}"
            )

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.q.shape[-1])


@dataclass(frozen=True)
class FirstFrameContext:
    """Frame 1's keys and values, detached from the batch they came from."""

    k1: torch.Tensor  # (T, d)
    v1: torch.Tensor
    layer_id: str = ""


def cache_first_frame(tensors: AttentionTensors, layer_id: str = "") -> FirstFrameContext:
    """Copy out frame 1's k and v; later mutation of the inputs has no effect."""
    if tensors.q.shape[0] < 1:
        raise EmptyBatch("attention batch has no frames")
    return FirstFrameContext(
        k1=tensors.k[0].clone(), v1=tensors.v[0].clone(), layer_id=layer_id
    )


def _attend(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, scale: float) -> torch.Tensor:
    """softmax(q k^T * scale) v with max-subtracted logits; last two dims are (T, d)."""
    logits = (q @ k.transpose(-2, -1)) * scale
    logits = logits - logits.max(dim=-1, keepdim=True).values
    weights = torch.softmax(logits, dim=-1)
    return weights @ v


def cross_frame_attend(
    tensors: AttentionTensors, context: FirstFrameContext
) -> torch.Tensor:
    """For each frame f: softmax(q[f] k1^T / sqrt(d)) v1. Returns (N, T, d)."""
    if context.k1.shape != tensors.k.shape[1:] or context.v1.shape != tensors.v.shape[1:]:
        raise DimensionMismatch(
            f"context shape {tuple(context.k1.shape)} does not match "
            f"batch token layout {tuple(tensors.k.shape[1:])}"
        )
    n = tensors.q.shape[0]
    k1 = context.k1.unsqueeze(0).expand(n, -1, -1)
    v1 = context.v1.unsqueeze(0).expand(n, -1, -1)
    return _attend(tensors.q, k1, v1, tensors.scale)


def self_attend(tensors: AttentionTensors) -> torch.Tensor:
    """Plain per-frame self-attention, same numerics as cross_frame_attend."""
    return _attend(tensors.q, tensors.k, tensors.v, tensors.scale)


SCOPE_MAIN = "main_denoiser"
SCOPE_MAIN_PLUS_CONTROL = "main_plus_control_branch"


def patch_model(model, scope: str = SCOPE_MAIN, control_branch=None) -> tuple[object, dict]:
    """Switch every in-scope self-attention site to cross-frame routing.

    ``model`` is any torch module exposing self-attention sites (modules with
    a truthy ``is_self_attention`` attribute and a ``cross_frame`` flag);
    scope "main_plus_control_branch" additionally patches the given control
    branch module. Cross-attention (text) sites are untouched.

    Returns the mutated model plus a patch report
    ``{"scope", "sites": [layer ids], "count"}``.
    """
    if scope not in (SCOPE_MAIN, SCOPE_MAIN_PLUS_CONTROL):
        raise ValueError(f"unknown patch scope {scope!r}")

    targets = [("", model)]
    if scope == SCOPE_MAIN_PLUS_CONTROL:
        if control_branch is None:
            raise ValueError("scope 'main_plus_control_branch' needs a control_branch")
        targets.append(("control_branch.", control_branch))

    sites: list[str] = []
    for prefix, target in targets:
        for name, module in target.named_modules():
            if getattr(module, "is_self_attention", False):
                module.cross_frame = True
                sites.append(prefix + (getattr(module, "layer_id", name) or name))

    if not sites:
        raise NoAttentionSites(f"model exposes no self-attention sites in scope {scope!r}")
    return model, {"scope": scope, "sites": sites, "count": len(sites)}


def unpatch_model(model, control_branch=None) -> None:
    """Restore plain self-attention on every site (inverse of patch_model)."""
    targets = [model] if control_branch is None else [model, control_branch]
    for target in targets:
        for _, module in target.named_modules():
            if getattr(module, "is_self_attention", False):
                module.cross_frame = False
