"""Pixel-level text decoder.

Consumes the image embedding plus the self-generated prompt tokens and
produces a single global text/non-text mask at two resolutions:

* low res: transposed-conv upscaling of the attended embedding into mask
  features F (4x the embedding grid), then a per-pixel dot product with an
  MLP projection of the updated mask token.
* high res: two more stride-2 transposed convs plus four 3x3 refinement
  convs lift F to input resolution; a separate token MLP yields the
  high-res logits the same way.

The high-res branch hangs off F after the low-res logits are computed, so
disabling it cannot change the low-res output. A score head predicts the
mask's IoU with ground truth, squashed to [0, 1].

Token layout (shared with the hierarchy decoder): slot 0 is the score
token, slots 1-4 are mask tokens. This decoder reads mask slot 0.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..profiles import ScaleProfile
from .common import MLP, LayerNorm2d
from .two_way import TwoWayTransformer

DECODER_DEPTH = 2
DECODER_HEADS = 8
NUM_MASK_TOKENS = 4
TEXT_MASK_SLOT = 0


def binarize(logits: torch.Tensor, size: int) -> torch.Tensor:
    """Bilinear upsample logits to ``size`` then threshold at logit 0."""
    x = logits
    squeeze = False
    if x.dim() == 2:
        x = x[None, None]
        squeeze = True
    elif x.dim() == 3:
        x = x[:, None]
    x = F.interpolate(x.float(), size=(size, size), mode="bilinear", align_corners=False)
    out = x > 0
    if squeeze:
        return out[0, 0]
    return out[:, 0] if logits.dim() == 3 else out


class PixelTextDecoder(nn.Module):
    def __init__(self, profile: ScaleProfile) -> None:
        super().__init__()
        self.profile = profile
        c = profile.embed_dim
        lr_dim, hr_dim = profile.lr_mask_dim, profile.hr_mask_dim
        self.iou_token = nn.Embedding(1, c)
        self.mask_tokens = nn.Embedding(NUM_MASK_TOKENS, c)
        self.transformer = TwoWayTransformer(DECODER_DEPTH, c, DECODER_HEADS)
        self.output_upscaling = nn.Sequential(
            nn.ConvTranspose2d(c, c // 4, kernel_size=2, stride=2),
            LayerNorm2d(c // 4),
            nn.GELU(),
            nn.ConvTranspose2d(c // 4, lr_dim, kernel_size=2, stride=2),
            nn.GELU(),
        )
        self.hypernet = nn.ModuleList(
            MLP(c, c, lr_dim, 3) for _ in range(NUM_MASK_TOKENS)
        )
        self.iou_head = MLP(c, c, NUM_MASK_TOKENS, 3, sigmoid_output=True)
        # High-res branch: F -> half-res features -> input-res features.
        self.hr_upscaling = nn.Sequential(
            nn.ConvTranspose2d(lr_dim, hr_dim, kernel_size=2, stride=2),
            LayerNorm2d(hr_dim),
            nn.GELU(),
            nn.ConvTranspose2d(hr_dim, hr_dim, kernel_size=2, stride=2),
            nn.GELU(),
        )
        self.hr_refine = nn.Sequential(
            nn.Conv2d(hr_dim, hr_dim, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(hr_dim, hr_dim, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(hr_dim, hr_dim, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(hr_dim, hr_dim, 3, padding=1),
        )
        self.hr_hypernet = MLP(c, c, hr_dim, 3)

    def upsample_mask_features(
        self, mask_features: torch.Tensor, token: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Lift low-res mask features to high-res logits for one token set.

        Returns (hr_features [B, hr_dim, H, H], hr_logits [B, H, H]).
        """
        hr_feats = self.hr_refine(self.hr_upscaling(mask_features))
        weights = self.hr_hypernet(token)
        logits = torch.einsum("bc,bchw->bhw", weights, hr_feats)
        return hr_feats, logits

    def forward(
        self,
        image_embedding: torch.Tensor,  # [B, C, hw, hw]
        image_pe: torch.Tensor,  # [1, C, hw, hw]
        prompt_tokens: torch.Tensor,  # [B, N, C]
        use_hr: bool = True,
    ) -> dict:
        b = image_embedding.shape[0]
        fixed = torch.cat([self.iou_token.weight, self.mask_tokens.weight], dim=0)
        tokens = torch.cat(
            [fixed.unsqueeze(0).expand(b, -1, -1), prompt_tokens], dim=1
        )
        hs, src = self.transformer(image_embedding, image_pe, tokens)
        hw = image_embedding.shape[-1]
        src = src.transpose(1, 2).reshape(b, -1, hw, hw)
        mask_features = self.output_upscaling(src)

        token = hs[:, 1 + TEXT_MASK_SLOT]
        weights = self.hypernet[TEXT_MASK_SLOT](token)
        lr_logits = torch.einsum("bc,bchw->bhw", weights, mask_features)
        iou_pred = self.iou_head(hs[:, 0])[:, TEXT_MASK_SLOT]

        hr_logits = None
        if use_hr:
            _, hr_logits = self.upsample_mask_features(mask_features, token)
        return {
            "lr_logits": lr_logits,
            "hr_logits": hr_logits,
            "iou_pred": iou_pred,
            "token": token,
            "mask_features": mask_features,
        }
