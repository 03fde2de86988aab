"""Self-prompting: deriving decoder prompt tokens from the image embedding.

Instead of user clicks, the pixel-text path prompts itself. A four-layer
conv stack turns the embedding into N sigmoid spatial attention maps; each
map pools the embedding into one token (attention-weighted spatial mean per
channel). An optional single transformer decoder layer then refines the
tokens against the flattened embedding. Tokens carry no positional encoding:
they are an unordered set, and the refiner treats them permutation-
equivariantly.
"""

from __future__ import annotations

import torch
from torch import nn

from ..profiles import ScaleProfile

REFINER_HEADS = 8
REFINER_FFN_RATIO = 2


class SpatialAttentionStack(nn.Module):
    """Four 3x3 convs (stride 1, pad 1), GELU between, sigmoid on top."""

    def __init__(self, embed_dim: int, token_count: int) -> None:
        super().__init__()
        n = token_count
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(embed_dim, n, 3, stride=1, padding=1),
                nn.Conv2d(n, n, 3, stride=1, padding=1),
                nn.Conv2d(n, n, 3, stride=1, padding=1),
                nn.Conv2d(n, n, 3, stride=1, padding=1),
            ]
        )
        self.act = nn.GELU()

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        x = embedding
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = self.act(x)
        return torch.sigmoid(x)


def tokenize(attention: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
    """Pool an embedding into tokens under per-token attention maps.

    token[k, c] = mean over all cells of attention[k, h, w] * embedding[c, h, w]

    attention: [B, N, H, W] in (0, 1); embedding: [B, C, H, W] -> [B, N, C].
    """
    b, n, h, w = attention.shape
    return torch.einsum("bnhw,bchw->bnc", attention, embedding) / (h * w)


class TokenRefiner(nn.Module):
    """One transformer decoder layer: tokens query the flattened embedding."""

    def __init__(self, embed_dim: int) -> None:
        super().__init__()
        self.layer = nn.TransformerDecoderLayer(
            d_model=embed_dim,
            nhead=REFINER_HEADS,
            dim_feedforward=REFINER_FFN_RATIO * embed_dim,
            dropout=0.0,
            batch_first=True,
        )

    def forward(self, tokens: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        b, c, h, w = embedding.shape
        memory = embedding.flatten(2).transpose(1, 2)  # [B, HW, C]
        return self.layer(tokens, memory)


class SelfPromptingModule(nn.Module):
    """Produces the pixel-text decoder's prompt tokens from the embedding.

    ``use_refiner`` toggles the transformer layer (ablation knob).
    ``learned_tokens`` swaps the attention-pooled tokens for a plain learned
    embedding table, the simplest alternative prompt source.
    """

    def __init__(
        self,
        profile: ScaleProfile,
        use_refiner: bool = True,
        learned_tokens: bool = False,
    ) -> None:
        super().__init__()
        self.profile = profile
        self.use_refiner = use_refiner
        self.learned_tokens = learned_tokens
        n, c = profile.prompt_token_count, profile.embed_dim
        if learned_tokens:
            self.token_table = nn.Parameter(torch.randn(n, c) * 0.02)
            self.attention_stack = None
        else:
            self.token_table = None
            self.attention_stack = SpatialAttentionStack(c, n)
        self.refiner = TokenRefiner(c) if use_refiner else None

    def attention_maps(self, embedding: torch.Tensor) -> torch.Tensor:
        if self.attention_stack is None:
            raise RuntimeError("learned-token mode has no attention maps")
        return self.attention_stack(embedding)

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        """[B, C, hw, hw] -> prompt tokens [B, N, C]."""
        b = embedding.shape[0]
        if self.learned_tokens:
            tokens = self.token_table.unsqueeze(0).expand(b, -1, -1)
        else:
            attn = self.attention_stack(embedding)
            tokens = tokenize(attn, embedding)
        if self.refiner is not None:
            tokens = self.refiner(tokens, embedding)
        return tokens
