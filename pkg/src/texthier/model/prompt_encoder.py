"""Frozen point-prompt encoder.

Points are embedded with random Fourier positional features plus a learned
(but frozen) foreground label embedding. Each prompt expands to two tokens:
the point token and a padding token, matching the decoder's expected prompt
width. The same positional machinery provides the dense per-cell encoding
the mask decoders use for image positions.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..errors import ValidationError
from ..profiles import ScaleProfile


class PositionEmbeddingRandom(nn.Module):
    """Random spatial-frequency Fourier features for 2D coordinates."""

    def __init__(self, num_pos_feats: int, scale: float = 1.0) -> None:
        super().__init__()
        self.register_buffer(
            "gaussian_matrix", scale * torch.randn(2, num_pos_feats)
        )

    def _encode(self, coords: torch.Tensor) -> torch.Tensor:
        # coords in [0, 1]^2, last dim (x, y)
        coords = 2 * coords - 1
        coords = coords @ self.gaussian_matrix
        coords = 2 * np.pi * coords
        return torch.cat([torch.sin(coords), torch.cos(coords)], dim=-1)

    def forward(self, size: int) -> torch.Tensor:
        """Dense grid encoding, shape [C, size, size]."""
        device = self.gaussian_matrix.device
        grid = torch.ones(size, size, device=device)
        y = (grid.cumsum(0) - 0.5) / size
        x = (grid.cumsum(1) - 0.5) / size
        pe = self._encode(torch.stack([x, y], dim=-1))
        return pe.permute(2, 0, 1)

    def encode_coords(self, points: torch.Tensor, input_size: int) -> torch.Tensor:
        """Encode pixel-space (x, y) points, shape [..., 2] -> [..., C]."""
        coords = (points + 0.5) / input_size
        return self._encode(coords)


class PromptEncoder(nn.Module):
    def __init__(self, profile: ScaleProfile) -> None:
        super().__init__()
        self.profile = profile
        self.pe_layer = PositionEmbeddingRandom(profile.embed_dim // 2)
        self.foreground_embed = nn.Parameter(torch.randn(profile.embed_dim) * 0.02)
        self.not_a_point_embed = nn.Parameter(torch.randn(profile.embed_dim) * 0.02)
        for p in self.parameters():
            p.requires_grad = False

    def encode_points(self, points: torch.Tensor) -> torch.Tensor:
        """[K, 2] pixel coords -> [K, 2, C] prompt tokens.

        Token 0 carries position + foreground label; token 1 is padding.
        Out-of-bounds coordinates are a contract violation.
        """
        if points.ndim != 2 or points.shape[-1] != 2:
            raise ValidationError(f"points must be [K, 2], got {tuple(points.shape)}")
        size = self.profile.input_size
        if points.numel() and (
            points.min() < 0 or points.max() >= size
        ):
            raise ValidationError(
                f"point coordinates must lie in [0, {size}), got "
                f"[{float(points.min())}, {float(points.max())}]"
            )
        pos = self.pe_layer.encode_coords(points.float(), size)
        point_tok = pos + self.foreground_embed
        pad_tok = self.not_a_point_embed.expand(points.shape[0], -1)
        return torch.stack([point_tok, pad_tok], dim=1)

    def dense_pe(self) -> torch.Tensor:
        """[1, C, hw, hw] positional grid for decoder cross-attention."""
        return self.pe_layer(self.profile.embed_hw).unsqueeze(0)
