"""Hierarchy decoder: word / line / paragraph masks from point prompts.

Shares the pixel-text decoder's token layout (slot 0 score token, slots 1-4
mask tokens) but reads the LAST THREE mask slots: slot 2 -> word kernels,
slot 3 -> text line, slot 4 -> paragraph. Given K point prompts the decoder
runs with batch K over the same image embedding and returns K independent
predictions.

The word head gets a high-res pathway of its own: a 1x1 channel-reduce conv
on the mask features, bilinear interpolation to the word grid (1.5x the
low-res grid), four 3x3 refinement convs, and a dedicated token MLP. Words
are the smallest unit in the hierarchy and need the extra resolution; the
word target is the union of the shrunk word kernels on the prompted line.

The score head regresses mask IoU for the line and paragraph slots (bounded
to [0, 1] by a sigmoid); line scores drive generation-time filtering.
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
WORD_SLOT, LINE_SLOT, PARA_SLOT = 1, 2, 3


class HierarchyDecoder(nn.Module):
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
        # Word high-res pathway.
        self.word_reduce = nn.Conv2d(lr_dim, hr_dim, kernel_size=1)
        self.word_refine = nn.Sequential(
            nn.Conv2d(hr_dim, hr_dim, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(hr_dim, hr_dim, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(hr_dim, hr_dim, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(hr_dim, hr_dim, 3, padding=1),
        )
        self.word_hypernet = MLP(c, c, hr_dim, 3)

    def forward(
        self,
        image_embedding: torch.Tensor,  # [K, C, hw, hw] (expanded per point)
        image_pe: torch.Tensor,  # [1, C, hw, hw]
        point_tokens: torch.Tensor,  # [K, n_p, C]
    ) -> dict:
        k = point_tokens.shape[0]
        c = image_embedding.shape[1]
        if k == 0:
            lr = self.profile.lr_mask_size
            wh = self.profile.word_hr_size
            zero = image_embedding.new_zeros
            return {
                "word_lr": zero((0, lr, lr)),
                "word_hr": zero((0, wh, wh)),
                "line_lr": zero((0, lr, lr)),
                "para_lr": zero((0, lr, lr)),
                "iou_word": zero((0,)),
                "iou_line": zero((0,)),
                "iou_para": zero((0,)),
            }
        fixed = torch.cat([self.iou_token.weight, self.mask_tokens.weight], dim=0)
        tokens = torch.cat(
            [fixed.unsqueeze(0).expand(k, -1, -1), point_tokens], dim=1
        )
        if image_embedding.shape[0] == 1 and k > 1:
            image_embedding = image_embedding.expand(k, -1, -1, -1)
        hs, src = self.transformer(image_embedding, image_pe, tokens)
        hw = self.profile.embed_hw
        src = src.transpose(1, 2).reshape(k, c, hw, hw)
        mask_features = self.output_upscaling(src)

        def lr_mask(slot: int) -> torch.Tensor:
            w = self.hypernet[slot](hs[:, 1 + slot])
            return torch.einsum("bc,bchw->bhw", w, mask_features)

        word_lr = lr_mask(WORD_SLOT)
        line_lr = lr_mask(LINE_SLOT)
        para_lr = lr_mask(PARA_SLOT)

        wh_size = self.profile.word_hr_size
        word_feats = F.interpolate(
            self.word_reduce(mask_features),
            size=(wh_size, wh_size),
            mode="bilinear",
            align_corners=False,
        )
        word_feats = self.word_refine(word_feats)
        word_w = self.word_hypernet(hs[:, 1 + WORD_SLOT])
        word_hr = torch.einsum("bc,bchw->bhw", word_w, word_feats)

        iou = self.iou_head(hs[:, 0])
        return {
            "word_lr": word_lr,
            "word_hr": word_hr,
            "line_lr": line_lr,
            "para_lr": para_lr,
            "iou_word": iou[:, WORD_SLOT],
            "iou_line": iou[:, LINE_SLOT],
            "iou_para": iou[:, PARA_SLOT],
        }
