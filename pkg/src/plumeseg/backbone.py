"""Multi-scale pyramid encoder for grayscale video frames.

Four stages at strides 4/8/16/32; each stage is a strided patch embedding
followed by transformer blocks with spatial-reduction attention. Stage 1 is
computed but only stages 2-4 are exported, so scale i of the output pyramid
has spatial size (H / 2^(i+1), W / 2^(i+1)).
"""

from dataclasses import dataclass, field

import torch
from torch import nn
from torch.nn.init import trunc_normal_

from .layers import parameter_count

EXPORTED_SCALES = (2, 3, 4)


@dataclass(frozen=True)
class EncoderConfig:
    widths: tuple = (32, 64, 128, 160)
    depths: tuple = (1, 1, 2, 2)
    heads: tuple = (1, 2, 4, 5)
    sr_ratios: tuple = (8, 4, 2, 1)
    mlp_ratio: float = 4.0

    def __post_init__(self):
        for name in ("widths", "depths", "heads", "sr_ratios"):
            value = getattr(self, name)
            if len(value) != 4:
                raise ValueError(f"{name} must have 4 entries, got {value}")
            if any(int(v) != v or v < 0 for v in value):
                raise ValueError(f"{name} entries must be non-negative integers")
        if any(h < 1 for h in self.heads):
            raise ValueError("heads must be >= 1 per stage")
        if any(d < 1 for d in self.depths):
            raise ValueError("depths must be >= 1 per stage")
        for i, (w, h) in enumerate(zip(self.widths, self.heads)):
            if w > 0 and w % h != 0:
                raise ValueError(f"stage {i}: width {w} not divisible by heads {h}")
        for i, sr in enumerate(self.sr_ratios):
            # stage i runs at stride 2^(i+2); the smallest legal input (32 px)
            # leaves a 2^(3-i) px map, which the reduction conv must not exceed
            if sr < 1 or sr > 2 ** (3 - i):
                raise ValueError(f"stage {i}: sr_ratio {sr} out of range [1, {2 ** (3 - i)}]")
        if self.mlp_ratio <= 0:
            raise ValueError("mlp_ratio must be positive")


@dataclass
class FeaturePyramid:
    """Per-frame multi-scale features: scale i -> (C_i, H/2^(i+1), W/2^(i+1))."""

    levels: dict
    input_size: tuple

    def validate(self):
        if set(self.levels.keys()) != set(EXPORTED_SCALES):
            raise ValueError(f"pyramid must hold scales {EXPORTED_SCALES}, got {sorted(self.levels)}")
        h, w = self.input_size
        for i, feat in self.levels.items():
            expect = (-(-h // 2 ** (i + 1)), -(-w // 2 ** (i + 1)))
            if tuple(feat.shape[-2:]) != expect:
                raise ValueError(f"scale {i}: expected spatial {expect}, got {tuple(feat.shape[-2:])}")
            if not torch.isfinite(feat).all():
                raise ValueError(f"scale {i}: non-finite features")
        return self


def normalize_frames(x: torch.Tensor) -> torch.Tensor:
    """Per-frame min-max to [0, 1], then fixed mean/std standardization (0.5/0.5).

    Constant frames map to zeros before standardization.
    """
    flat = x.flatten(1)
    lo = flat.amin(dim=1).view(-1, *([1] * (x.dim() - 1)))
    hi = flat.amax(dim=1).view(-1, *([1] * (x.dim() - 1)))
    span = hi - lo
    scaled = torch.where(span > 0, (x - lo) / torch.where(span > 0, span, torch.ones_like(span)), torch.zeros_like(x))
    return (scaled - 0.5) / 0.5


class PatchEmbed(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride, padding):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, out_channels, kernel_size, stride=stride, padding=padding)
        self.norm = nn.LayerNorm(out_channels)

    def forward(self, x):
        x = self.proj(x)
        _, _, h, w = x.shape
        tokens = x.flatten(2).transpose(1, 2)  # B, N, C
        return self.norm(tokens), (h, w)


class SpatialReductionAttention(nn.Module):
    def __init__(self, dim, num_heads, sr_ratio):
        super().__init__()
        self.num_heads = num_heads
        head_dim = dim // num_heads if num_heads else 0
        self.scale = head_dim ** -0.5 if head_dim > 0 else 0.0
        self.sr_ratio = sr_ratio
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, dim * 2)
        self.proj = nn.Linear(dim, dim)
        if sr_ratio > 1:
            self.sr = nn.Conv2d(dim, dim, sr_ratio, stride=sr_ratio)
            self.sr_norm = nn.LayerNorm(dim)

    def forward(self, x, hw):
        b, n, c = x.shape
        h, w = hw
        q = self.q(x).reshape(b, n, self.num_heads, c // self.num_heads).permute(0, 2, 1, 3)
        if self.sr_ratio > 1:
            x_ = x.transpose(1, 2).reshape(b, c, h, w)
            x_ = self.sr(x_).reshape(b, c, -1).transpose(1, 2)
            x_ = self.sr_norm(x_)
        else:
            x_ = x
        kv = self.kv(x_).reshape(b, -1, 2, self.num_heads, c // self.num_heads).permute(2, 0, 3, 1, 4)
        k, v = kv[0], kv[1]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class EncoderBlock(nn.Module):
    def __init__(self, dim, num_heads, sr_ratio, mlp_ratio):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SpatialReductionAttention(dim, num_heads, sr_ratio)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x, hw):
        x = x + self.attn(self.norm1(x), hw)
        x = x + self.mlp(self.norm2(x))
        return x


class PyramidEncoder(nn.Module):
    """Frame -> feature pyramid at strides 4/8/16/32 (scales 1-4, 2-4 exported)."""

    def __init__(self, config: EncoderConfig = None, in_channels: int = 1):
        super().__init__()
        self.config = config if config is not None else EncoderConfig()
        self.in_channels = in_channels
        cfg = self.config
        embeds, stages, norms = [], [], []
        prev = in_channels
        for i in range(4):
            if i == 0:
                embeds.append(PatchEmbed(prev, cfg.widths[i], kernel_size=7, stride=4, padding=3))
            else:
                embeds.append(PatchEmbed(prev, cfg.widths[i], kernel_size=3, stride=2, padding=1))
            stages.append(nn.ModuleList([
                EncoderBlock(cfg.widths[i], cfg.heads[i], cfg.sr_ratios[i], cfg.mlp_ratio)
                for _ in range(cfg.depths[i])
            ]))
            norms.append(nn.LayerNorm(cfg.widths[i]))
            prev = cfg.widths[i]
        self.patch_embeds = nn.ModuleList(embeds)
        self.stages = nn.ModuleList(stages)
        self.stage_norms = nn.ModuleList(norms)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(m):
        if isinstance(m, nn.Linear):
            trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Conv2d):
            trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)

    def forward(self, x: torch.Tensor) -> dict:
        """Encode a batch of raw frames (B, 1, H, W) with values in [0, 1].

        Returns {scale: (B, C_i, H/2^(i+1), W/2^(i+1))} for scales 2-4.
        """
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (B, {self.in_channels}, H, W) input, got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        if h % 32 != 0 or w % 32 != 0:
            raise ValueError(f"input dims must be divisible by 32, got {h}x{w}")
        if not torch.isfinite(x).all():
            raise ValueError("input frame contains non-finite pixels")
        x = normalize_frames(x)
        feats = {}
        for i in range(4):
            tokens, (sh, sw) = self.patch_embeds[i](x)
            for block in self.stages[i]:
                tokens = block(tokens, (sh, sw))
            tokens = self.stage_norms[i](tokens)
            x = tokens.transpose(1, 2).reshape(x.shape[0], self.config.widths[i], sh, sw)
            if i + 1 in EXPORTED_SCALES:
                feats[i + 1] = x
        return feats

    def encode_frame(self, frame) -> FeaturePyramid:
        """Encode one grayscale frame (H, W) into a validated FeaturePyramid."""
        if not torch.is_tensor(frame):
            frame = torch.as_tensor(frame)
        if frame.dim() != 2:
            raise ValueError(f"expected a single (H, W) frame, got shape {tuple(frame.shape)}")
        ref = next(self.parameters(), None)
        if ref is not None:
            frame = frame.to(dtype=ref.dtype, device=ref.device)
        feats = self.forward(frame[None, None])
        pyramid = FeaturePyramid(
            levels={i: f[0] for i, f in feats.items()},
            input_size=tuple(frame.shape),
        )
        return pyramid.validate()


def encoder_param_count(config: EncoderConfig) -> int:
    """Exact number of trainable scalars an encoder built from `config` holds."""
    return parameter_count(PyramidEncoder(config))
