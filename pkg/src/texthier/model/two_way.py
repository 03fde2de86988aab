"""Two-way transformer shared by both mask decoders.

Tokens and image cells attend in both directions: each layer runs token
self-attention, token-to-image cross-attention, a token MLP, and
image-to-token cross-attention, all with residuals and layer norms. The
original token/positional embeddings are re-added as queries and keys at
every layer. Cross-attention projects to half width to keep the image-side
attention cheap.
"""

from __future__ import annotations

import torch
from torch import nn

MLP_RATIO = 2
CROSS_ATTN_DOWNSAMPLE = 2


class ProjectedAttention(nn.Module):
    """Multi-head attention with optional internal downsampling."""

    def __init__(self, dim: int, heads: int, downsample_rate: int = 1) -> None:
        super().__init__()
        self.internal_dim = dim // downsample_rate
        self.heads = heads
        assert self.internal_dim % heads == 0, "attention dim must split over heads"
        self.q_proj = nn.Linear(dim, self.internal_dim)
        self.k_proj = nn.Linear(dim, self.internal_dim)
        self.v_proj = nn.Linear(dim, self.internal_dim)
        self.out_proj = nn.Linear(self.internal_dim, dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        return x.reshape(b, n, self.heads, c // self.heads).transpose(1, 2)

    def forward(
        self, q: torch.Tensor, k: torch.Tensor, v: torch.Tensor
    ) -> torch.Tensor:
        q = self._split(self.q_proj(q))
        k = self._split(self.k_proj(k))
        v = self._split(self.v_proj(v))
        scale = (q.shape[-1]) ** -0.5
        attn = (q @ k.transpose(-2, -1)) * scale
        attn = attn.softmax(dim=-1)
        out = attn @ v
        b, h, n, d = out.shape
        return self.out_proj(out.transpose(1, 2).reshape(b, n, h * d))


class TwoWayAttentionBlock(nn.Module):
    def __init__(self, dim: int, heads: int, skip_first_layer_pe: bool) -> None:
        super().__init__()
        self.self_attn = ProjectedAttention(dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.cross_attn_t2i = ProjectedAttention(dim, heads, CROSS_ATTN_DOWNSAMPLE)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * MLP_RATIO),
            nn.ReLU(),
            nn.Linear(dim * MLP_RATIO, dim),
        )
        self.norm3 = nn.LayerNorm(dim)
        self.cross_attn_i2t = ProjectedAttention(dim, heads, CROSS_ATTN_DOWNSAMPLE)
        self.norm4 = nn.LayerNorm(dim)
        self.skip_first_layer_pe = skip_first_layer_pe

    def forward(self, queries, keys, query_pe, key_pe):
        if self.skip_first_layer_pe:
            queries = self.self_attn(queries, queries, queries)
        else:
            q = queries + query_pe
            queries = queries + self.self_attn(q, q, queries)
        queries = self.norm1(queries)

        q = queries + query_pe
        k = keys + key_pe
        queries = queries + self.cross_attn_t2i(q, k, keys)
        queries = self.norm2(queries)

        queries = queries + self.mlp(queries)
        queries = self.norm3(queries)

        q = queries + query_pe
        k = keys + key_pe
        keys = keys + self.cross_attn_i2t(k, q, queries)
        keys = self.norm4(keys)
        return queries, keys


class TwoWayTransformer(nn.Module):
    def __init__(self, depth: int, dim: int, heads: int) -> None:
        super().__init__()
        self.layers = nn.ModuleList(
            TwoWayAttentionBlock(dim, heads, skip_first_layer_pe=(i == 0))
            for i in range(depth)
        )
        self.final_attn = ProjectedAttention(dim, heads, CROSS_ATTN_DOWNSAMPLE)
        self.final_norm = nn.LayerNorm(dim)

    def forward(
        self,
        image_embedding: torch.Tensor,  # [B, C, H, W]
        image_pe: torch.Tensor,  # [1 or B, C, H, W]
        tokens: torch.Tensor,  # [B, N, C]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        b, c, h, w = image_embedding.shape
        keys = image_embedding.flatten(2).permute(0, 2, 1)
        key_pe = image_pe.flatten(2).permute(0, 2, 1)
        if key_pe.shape[0] == 1 and b > 1:
            key_pe = key_pe.expand(b, -1, -1)
        queries = tokens
        query_pe = tokens
        for layer in self.layers:
            queries, keys = layer(queries, keys, query_pe, key_pe)
        q = queries + query_pe
        k = keys + key_pe
        queries = queries + self.final_attn(q, k, keys)
        queries = self.final_norm(queries)
        return queries, keys
