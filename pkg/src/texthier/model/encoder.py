"""Frozen vision-transformer image encoder with trainable adapters.

The backbone (patch embed, position embedding, attention/MLP blocks, neck)
never trains; task adaptation lives entirely in two low-rank adapter
branches per block. Each adapter is down-projection -> ReLU -> up-projection
with the up-projection zero-initialized, so a freshly built encoder is
bit-identical to its frozen backbone until the first optimizer step.

Placement per block: one adapter applied residually after the attention
sublayer, one running in parallel with the MLP sublayer at half scale.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..profiles import ScaleProfile
from .common import LayerNorm2d

# Channel statistics used to normalize uint8 RGB inputs (0..255 scale).
DEFAULT_PIXEL_MEAN = (123.675, 116.28, 103.53)
DEFAULT_PIXEL_STD = (58.395, 57.12, 57.375)

PARALLEL_ADAPTER_SCALE = 0.5


class AdapterBranch(nn.Module):
    """Bottleneck branch: up(relu(down(x))). Zero-init up => zero output."""

    def __init__(self, dim: int, bottleneck: int) -> None:
        super().__init__()
        self.down = nn.Linear(dim, bottleneck)
        self.up = nn.Linear(bottleneck, dim)
        nn.init.zeros_(self.up.weight)
        nn.init.zeros_(self.up.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.up(F.relu(self.down(x)))


def adapter_forward(x: torch.Tensor, adapter: AdapterBranch) -> torch.Tensor:
    """Residual adapter application: x + up(relu(down(x)))."""
    return x + adapter(x)


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int) -> None:
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = self.head_dim**-0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: int, bottleneck: int) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio),
            nn.GELU(),
            nn.Linear(dim * mlp_ratio, dim),
        )
        self.adapter_attn = AdapterBranch(dim, bottleneck)
        self.adapter_mlp = AdapterBranch(dim, bottleneck)

    def forward(self, x: torch.Tensor, use_adapters: bool = True) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        if use_adapters:
            x = adapter_forward(x, self.adapter_attn)
        normed = self.norm2(x)
        y = x + self.mlp(normed)
        if use_adapters:
            y = y + PARALLEL_ADAPTER_SCALE * self.adapter_mlp(normed)
        return y


class ImageEncoder(nn.Module):
    """Patch embed -> transformer blocks -> neck, output [B, C, hw, hw]."""

    def __init__(
        self,
        profile: ScaleProfile,
        pixel_mean: tuple[float, float, float] = DEFAULT_PIXEL_MEAN,
        pixel_std: tuple[float, float, float] = DEFAULT_PIXEL_STD,
    ) -> None:
        super().__init__()
        self.profile = profile
        enc = profile.encoder
        hw = profile.embed_hw
        self.patch_embed = nn.Conv2d(
            3, enc.width, kernel_size=profile.patch_size, stride=profile.patch_size
        )
        self.pos_embed = nn.Parameter(torch.zeros(1, hw, hw, enc.width))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            EncoderBlock(enc.width, enc.heads, enc.mlp_ratio, enc.adapter_bottleneck)
            for _ in range(enc.depth)
        )
        self.neck = nn.Sequential(
            nn.Conv2d(enc.width, profile.embed_dim, kernel_size=1, bias=False),
            LayerNorm2d(profile.embed_dim),
            nn.Conv2d(profile.embed_dim, profile.embed_dim, 3, padding=1, bias=False),
            LayerNorm2d(profile.embed_dim),
        )
        self.register_buffer(
            "pixel_mean", torch.tensor(pixel_mean).view(1, 3, 1, 1), persistent=True
        )
        self.register_buffer(
            "pixel_std", torch.tensor(pixel_std).view(1, 3, 1, 1), persistent=True
        )
        self._freeze_backbone()

    def _freeze_backbone(self) -> None:
        for name, param in self.named_parameters():
            param.requires_grad = "adapter" in name

    def preprocess(self, image: torch.Tensor) -> torch.Tensor:
        """Normalize a [B, 3, H, W] float tensor holding 0..255 values."""
        return (image - self.pixel_mean) / self.pixel_std

    def forward(self, x: torch.Tensor, use_adapters: bool = True) -> torch.Tensor:
        b = x.shape[0]
        x = self.patch_embed(x)  # [B, W, hw, hw]
        x = x.permute(0, 2, 3, 1) + self.pos_embed
        hw = x.shape[1]
        x = x.reshape(b, hw * hw, -1)
        for block in self.blocks:
            x = block(x, use_adapters=use_adapters)
        x = x.reshape(b, hw, hw, -1).permute(0, 3, 1, 2)
        return self.neck(x)

    def adapter_parameters(self):
        return [p for n, p in self.named_parameters() if "adapter" in n]

    def flops(self) -> int:
        """Analytic multiply-accumulate count for one forward pass."""
        prof, enc = self.profile, self.profile.encoder
        n = prof.embed_hw * prof.embed_hw
        d = enc.width
        patch = 3 * prof.patch_size**2 * d * n
        per_block = (
            4 * n * d * d  # qkv + output projections
            + 2 * n * n * d  # attention scores and weighted sum
            + 2 * n * d * (d * enc.mlp_ratio)  # MLP
            + 2 * n * d * (d // 4) * 2  # two adapters
        )
        neck = n * d * prof.embed_dim + n * prof.embed_dim**2 * 9
        return patch + enc.depth * per_block + neck
