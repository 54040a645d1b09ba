"""Seeded toy implementations of the four model capabilities.

The generation pipeline depends on a text encoder, a noise-prediction UNet
with residual-injection ports, a control branch, and a latent decoder. The
toy stack here satisfies those interfaces with tiny deterministic networks:
same seed, same platform, bit-identical weights. Real pretrained weights can
replace any piece by registering a checkpoint under STF_MODEL_DIR.

Geometry: latents are (4, H/8, W/8). The UNet has three stages; each down
stage emits two skip taps (spatial sizes h, h, h/2, h/2, h/4, h/4) and the
mid block sits at h/4. Control residuals map one-to-one onto the taps plus
the mid activation, entering through 1x1 projections that start as no-ops
when zero-initialized.
"""

from __future__ import annotations

import logging
import math
import os
import zlib
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .attention import AttentionTensors, cache_first_frame, cross_frame_attend, self_attend
from .errors import ResolutionMismatch, TokenLimitExceeded, UnknownModel

logger = logging.getLogger(__name__)

LATENT_CHANNELS = 4
LATENT_FACTOR = 8  # pixel resolution / latent resolution
TEXT_DIM = 32
TEXT_WINDOW = 77
_WIDTHS = (8, 12, 16)
_TIME_DIM = 32
_NORM_GROUPS = 4
_HEADS = 2


@dataclass
class ResidualStack:
    """Control-branch residuals: one tensor per down tap plus the mid tap."""

    down: tuple[torch.Tensor, ...]
    mid: torch.Tensor

    def scaled(self, scale: float) -> "ResidualStack":
        return ResidualStack(
            down=tuple(t * scale for t in self.down), mid=self.mid * scale
        )

    @staticmethod
    def stack(stacks: list["ResidualStack"]) -> "ResidualStack":
        """Concatenate per-frame stacks (each N=1) along the batch axis."""
        n_down = len(stacks[0].down)
        return ResidualStack(
            down=tuple(
                torch.cat([s.down[i] for s in stacks], dim=0) for i in range(n_down)
            ),
            mid=torch.cat([s.mid for s in stacks], dim=0),
        )

    def frame(self, k: int) -> "ResidualStack":
        return ResidualStack(
            down=tuple(t[k : k + 1] for t in self.down), mid=self.mid[k : k + 1]
        )


def timestep_embedding(t: int, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of a scalar train-timestep index."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t * freqs
    return torch.cat([torch.cos(args), torch.sin(args)])


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int = _TIME_DIM):
        super().__init__()
        self.norm1 = nn.GroupNorm(_NORM_GROUPS, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(_NORM_GROUPS, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(nn.functional.silu(self.norm1(x)))
        h = h + self.time_proj(t_emb).view(1, -1, 1, 1)
        h = self.conv2(nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class SelfAttention2d(nn.Module):
    """Patchable spatial self-attention; frames form the batch axis.

    With ``cross_frame`` set, every frame's queries attend to frame 1's
    keys/values (cached per head before attending).
    """

    is_self_attention = True

    def __init__(self, channels: int, layer_id: str, heads: int = _HEADS):
        super().__init__()
        assert channels % heads == 0
        self.layer_id = layer_id
        self.heads = heads
        self.head_dim = channels // heads
        self.cross_frame = False
        self.norm = nn.GroupNorm(_NORM_GROUPS, channels)
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(channels, channels, bias=False)
        self.to_v = nn.Linear(channels, channels, bias=False)
        self.to_out = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        tokens = self.norm(x).flatten(2).transpose(1, 2)  # (N, T, C)
        q, k, v = self.to_q(tokens), self.to_k(tokens), self.to_v(tokens)
        outs = []
        for head in range(self.heads):
            sl = slice(head * self.head_dim, (head + 1) * self.head_dim)
            tens = AttentionTensors(q=q[..., sl], k=k[..., sl], v=v[..., sl])
            if self.cross_frame:
                ctx = cache_first_frame(tens, layer_id=self.layer_id)
                outs.append(cross_frame_attend(tens, ctx))
            else:
                outs.append(self_attend(tens))
        out = self.to_out(torch.cat(outs, dim=-1))
        return x + out.transpose(1, 2).reshape(n, c, h, w)


class TextCrossAttention2d(nn.Module):
    """Pixel queries attending to text tokens; never cross-frame patched."""

    def __init__(self, channels: int, text_dim: int = TEXT_DIM, heads: int = _HEADS):
        super().__init__()
        assert channels % heads == 0
        self.heads = heads
        self.head_dim = channels // heads
        self.norm = nn.GroupNorm(_NORM_GROUPS, channels)
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(text_dim, channels, bias=False)
        self.to_v = nn.Linear(text_dim, channels, bias=False)
        self.to_out = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        q = self.to_q(self.norm(x).flatten(2).transpose(1, 2))  # (N, T_pix, C)
        k = self.to_k(text).unsqueeze(0).expand(n, -1, -1)  # (N, T_text, C)
        v = self.to_v(text).unsqueeze(0).expand(n, -1, -1)
        scale = 1.0 / math.sqrt(self.head_dim)
        outs = []
        for head in range(self.heads):
            sl = slice(head * self.head_dim, (head + 1) * self.head_dim)
            logits = (q[..., sl] @ k[..., sl].transpose(-2, -1)) * scale
            logits = logits - logits.max(dim=-1, keepdim=True).values
            outs.append(torch.softmax(logits, dim=-1) @ v[..., sl])
        out = self.to_out(torch.cat(outs, dim=-1))
        return x + out.transpose(1, 2).reshape(n, c, h, w)


class Downsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x):
        return self.conv(nn.functional.interpolate(x, scale_factor=2, mode="nearest"))


class DownStage(nn.Module):
    """res -> tap -> attn -> res -> tap (taps collected by the caller)."""

    def __init__(self, ch: int, stage_id: str):
        super().__init__()
        self.res1 = ResBlock(ch, ch)
        self.attn = SelfAttention2d(ch, layer_id=f"{stage_id}.attn")
        self.res2 = ResBlock(ch, ch)

    def forward(self, x, t_emb, taps: list):
        h = self.res1(x, t_emb)
        taps.append(h)
        h = self.attn(h)
        h = self.res2(h, t_emb)
        taps.append(h)
        return h


class ToyTextEncoder(nn.Module):
    """Deterministic bag-of-hashed-words encoder with positional embeddings."""

    def __init__(self, vocab: int = 512, dim: int = TEXT_DIM, window: int = TEXT_WINDOW):
        super().__init__()
        self.vocab = vocab
        self.window = window
        self.tokens = nn.Embedding(vocab, dim)
        self.positions = nn.Embedding(window, dim)

    def tokenize(self, text: str) -> list[int]:
        # id 0 is the pad token; words hash into 1..vocab-1
        return [1 + zlib.crc32(w.encode("utf-8")) % (self.vocab - 1) for w in text.split()]

    def encode(self, text: str, strict: bool = False) -> torch.Tensor:
        ids = self.tokenize(text)
        if len(ids) > self.window:
            if strict:
                raise TokenLimitExceeded(
                    f"prompt has {len(ids)} tokens, window is {self.window}"
                )
            logger.warning(
                "prompt truncated from %d to %d tokens", len(ids), self.window
            )
            ids = ids[: self.window]
        ids = ids + [0] * (self.window - len(ids))
        idx = torch.tensor(ids, dtype=torch.long)
        pos = torch.arange(self.window, dtype=torch.long)
        return self.tokens(idx) + self.positions(pos)


class ToyDenoiser(nn.Module):
    """Three-stage UNet predicting noise, with control-injection ports.

    Six self-attention sites (one per down and up stage); the mid block uses
    text cross-attention only. Residual injection adds the control stack's
    tensors onto the matching skip taps and the mid activation.
    """

    def __init__(self, latent_channels: int = LATENT_CHANNELS, widths=_WIDTHS):
        super().__init__()
        w1, w2, w3 = widths
        self.widths = widths
        self.time_mlp = nn.Sequential(
            nn.Linear(_TIME_DIM, _TIME_DIM), nn.SiLU(), nn.Linear(_TIME_DIM, _TIME_DIM)
        )
        self.conv_in = nn.Conv2d(latent_channels, w1, 3, padding=1)
        self.down1 = DownStage(w1, "down1")
        self.downsample1 = Downsample(w1, w2)
        self.down2 = DownStage(w2, "down2")
        self.downsample2 = Downsample(w2, w3)
        self.down3 = DownStage(w3, "down3")

        self.mid_res1 = ResBlock(w3, w3)
        self.mid_text = TextCrossAttention2d(w3)
        self.mid_res2 = ResBlock(w3, w3)

        self.up3a = ResBlock(w3 + w3, w3)
        self.up3_attn = SelfAttention2d(w3, layer_id="up3.attn")
        self.up3b = ResBlock(w3 + w3, w3)
        self.upsample3 = Upsample(w3, w2)
        self.up2a = ResBlock(w2 + w2, w2)
        self.up2_attn = SelfAttention2d(w2, layer_id="up2.attn")
        self.up2b = ResBlock(w2 + w2, w2)
        self.upsample2 = Upsample(w2, w1)
        self.up1a = ResBlock(w1 + w1, w1)
        self.up1_attn = SelfAttention2d(w1, layer_id="up1.attn")
        self.up1b = ResBlock(w1 + w1, w1)

        self.norm_out = nn.GroupNorm(_NORM_GROUPS, w1)
        self.conv_out = nn.Conv2d(w1, latent_channels, 3, padding=1)

    def forward(
        self,
        x: torch.Tensor,
        t: int,
        text: torch.Tensor,
        residuals: ResidualStack | None = None,
    ) -> torch.Tensor:
        t_emb = self.time_mlp(timestep_embedding(t, _TIME_DIM))
        taps: list[torch.Tensor] = []
        h = self.conv_in(x)
        h = self.down1(h, t_emb, taps)
        h = self.downsample1(h)
        h = self.down2(h, t_emb, taps)
        h = self.downsample2(h)
        h = self.down3(h, t_emb, taps)

        h = self.mid_res1(h, t_emb)
        h = self.mid_text(h, text)
        h = self.mid_res2(h, t_emb)

        if residuals is not None:
            if len(residuals.down) != len(taps):
                raise ResolutionMismatch(
                    f"expected {len(taps)} down residuals, got {len(residuals.down)}"
                )
            taps = [tap + res for tap, res in zip(taps, residuals.down)]
            h = h + residuals.mid

        h = self.up3a(torch.cat([h, taps[5]], dim=1), t_emb)
        h = self.up3_attn(h)
        h = self.up3b(torch.cat([h, taps[4]], dim=1), t_emb)
        h = self.upsample3(h)
        h = self.up2a(torch.cat([h, taps[3]], dim=1), t_emb)
        h = self.up2_attn(h)
        h = self.up2b(torch.cat([h, taps[2]], dim=1), t_emb)
        h = self.upsample2(h)
        h = self.up1a(torch.cat([h, taps[1]], dim=1), t_emb)
        h = self.up1_attn(h)
        h = self.up1b(torch.cat([h, taps[0]], dim=1), t_emb)

        out = self.conv_out(nn.functional.silu(self.norm_out(h)))
        # Residual prediction around the identity keeps toy trajectories tame.
        return x + out


class ToyControlBranch(nn.Module):
    """Mirror of the down path consuming a control image, emitting residuals.

    The control image (N, 1, H, W) is embedded by a strided stem down to
    latent resolution and added after conv_in. Output projections are 1x1
    convolutions; when zero-initialized the branch is exactly a no-op.
    """

    def __init__(self, latent_channels: int = LATENT_CHANNELS, widths=_WIDTHS):
        super().__init__()
        w1, w2, w3 = widths
        self.time_mlp = nn.Sequential(
            nn.Linear(_TIME_DIM, _TIME_DIM), nn.SiLU(), nn.Linear(_TIME_DIM, _TIME_DIM)
        )
        self.text_pool = nn.Linear(TEXT_DIM, _TIME_DIM)
        self.cond_stem = nn.Sequential(
            nn.Conv2d(1, w1, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(w1, w1, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(w1, w1, 3, stride=2, padding=1),
        )
        self.conv_in = nn.Conv2d(latent_channels, w1, 3, padding=1)
        self.down1 = DownStage(w1, "control.down1")
        self.downsample1 = Downsample(w1, w2)
        self.down2 = DownStage(w2, "control.down2")
        self.downsample2 = Downsample(w2, w3)
        self.down3 = DownStage(w3, "control.down3")
        self.mid_res = ResBlock(w3, w3)

        self.out_projs = nn.ModuleList(
            [nn.Conv2d(ch, ch, 1) for ch in (w1, w1, w2, w2, w3, w3)]
        )
        self.mid_proj = nn.Conv2d(w3, w3, 1)
        for proj in [*self.out_projs, self.mid_proj]:
            proj.is_zero_conv = True

    def zero_output_projections(self) -> None:
        """Zero every output projection, making the branch an exact no-op."""
        with torch.no_grad():
            for proj in [*self.out_projs, self.mid_proj]:
                proj.weight.zero_()
                proj.bias.zero_()

    def forward(
        self, x: torch.Tensor, t: int, text: torch.Tensor, cond_image: torch.Tensor
    ) -> ResidualStack:
        if cond_image.shape[-2] != x.shape[-2] * LATENT_FACTOR or (
            cond_image.shape[-1] != x.shape[-1] * LATENT_FACTOR
        ):
            raise ResolutionMismatch(
                f"control image {tuple(cond_image.shape[-2:])} is not "
                f"{LATENT_FACTOR}x the latent dims {tuple(x.shape[-2:])}"
            )
        t_emb = self.time_mlp(timestep_embedding(t, _TIME_DIM)) + self.text_pool(
            text.mean(dim=0)
        )
        taps: list[torch.Tensor] = []
        h = self.conv_in(x) + self.cond_stem(cond_image)
        h = self.down1(h, t_emb, taps)
        h = self.downsample1(h)
        h = self.down2(h, t_emb, taps)
        h = self.downsample2(h)
        h = self.down3(h, t_emb, taps)
        h = self.mid_res(h, t_emb)
        return ResidualStack(
            down=tuple(proj(tap) for proj, tap in zip(self.out_projs, taps)),
            mid=self.mid_proj(h),
        )


class ToyDecoder(nn.Module):
    """Latent (N, C, h, w) to RGB (N, 3, 8h, 8w) in [0, 1]."""

    def __init__(self, latent_channels: int = LATENT_CHANNELS, width: int = 16):
        super().__init__()
        self.conv_in = nn.Conv2d(latent_channels, width, 3, padding=1)
        self.ups = nn.ModuleList([Upsample(width, width) for _ in range(3)])
        self.conv_out = nn.Conv2d(width, 3, 3, padding=1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = self.conv_in(z)
        for up in self.ups:
            h = nn.functional.silu(up(h))
        return torch.sigmoid(self.conv_out(h))


@dataclass
class ModelBundle:
    """The four capabilities the pipeline composes."""

    text_encoder: ToyTextEncoder
    denoiser: ToyDenoiser
    control_branch: ToyControlBranch
    decoder: ToyDecoder
    identifier: str

    def latent_shape(self, resolution: tuple[int, int]) -> tuple[int, int, int]:
        h, w = resolution
        return (LATENT_CHANNELS, h // LATENT_FACTOR, w // LATENT_FACTOR)

    def modules(self):
        return (self.text_encoder, self.denoiser, self.control_branch, self.decoder)


def _init_weights(module: nn.Module, gen: torch.Generator, out_scale: float = 1.0):
    """Deterministic init: randn/sqrt(fan_in) matrices, zero biases, unit norms."""
    with torch.no_grad():
        for name, p in module.named_parameters():
            if p.ndim >= 2:
                fan_in = p[0].numel()
                p.copy_(torch.randn(p.shape, generator=gen) / math.sqrt(fan_in))
            elif name.endswith("bias"):
                p.zero_()
            else:
                p.fill_(1.0)
        for sub in module.modules():
            if getattr(sub, "is_zero_conv", False):
                sub.weight.mul_(0.25)  # gentle default control strength
        if out_scale != 1.0 and hasattr(module, "conv_out"):
            module.conv_out.weight.mul_(out_scale)


def build_toy_bundle(seed: int) -> ModelBundle:
    """Construct the seeded toy stack, frozen and in eval mode."""
    gen = torch.Generator().manual_seed(seed)
    text_encoder = ToyTextEncoder()
    denoiser = ToyDenoiser()
    control = ToyControlBranch()
    decoder = ToyDecoder()
    _init_weights(text_encoder, gen)
    _init_weights(denoiser, gen, out_scale=0.3)
    _init_weights(control, gen)
    _init_weights(decoder, gen)
    bundle = ModelBundle(
        text_encoder=text_encoder,
        denoiser=denoiser,
        control_branch=control,
        decoder=decoder,
        identifier=f"toy:{seed}",
    )
    for m in bundle.modules():
        m.eval()
        m.requires_grad_(False)
    return bundle


def save_models(bundle: ModelBundle, path: str | Path) -> None:
    """Persist a bundle as a loadable checkpoint (state dicts only)."""
    torch.save(
        {
            "text_encoder": bundle.text_encoder.state_dict(),
            "denoiser": bundle.denoiser.state_dict(),
            "control_branch": bundle.control_branch.state_dict(),
            "decoder": bundle.decoder.state_dict(),
        },
        path,
    )


def load_models(identifier: str) -> ModelBundle:
    """Resolve a model identifier: "toy:<seed>" or a checkpoint in STF_MODEL_DIR."""
    if identifier.startswith("toy:"):
        try:
            seed = int(identifier.split(":", 1)[1])
        except ValueError:
            raise UnknownModel(f"bad toy identifier {identifier!r}; use toy:<seed>")
        return build_toy_bundle(seed)

    model_dir = os.environ.get("STF_MODEL_DIR", "")
    path = Path(model_dir) / f"{identifier}.pt" if model_dir else None
    if path is None or not path.exists():
        raise UnknownModel(
            f"unknown model {identifier!r}: not a toy id and no checkpoint "
            f"{identifier}.pt under STF_MODEL_DIR={model_dir!r}"
        )
    state = torch.load(path, weights_only=True)
    bundle = build_toy_bundle(0)
    bundle.text_encoder.load_state_dict(state["text_encoder"])
    bundle.denoiser.load_state_dict(state["denoiser"])
    bundle.control_branch.load_state_dict(state["control_branch"])
    bundle.decoder.load_state_dict(state["decoder"])
    bundle.identifier = identifier
    return bundle
