"""The assembled segmentation network.

One frozen encoder feeds two decode paths:

* pixel text: self-generated prompt tokens -> pixel-text decoder (global
  text mask at low and high resolution plus a confidence score);
* hierarchy: user/sampled point prompts -> hierarchy decoder (word kernel,
  line, paragraph masks per point).

Point-prompted segmentation touches only the encoder, the prompt encoder,
and the hierarchy decoder; ``call_counts`` records decoder invocations so
that contract can be asserted.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import ValidationError
from ..profiles import ScaleProfile, get_profile
from .encoder import ImageEncoder
from .hierarchy_decoder import HierarchyDecoder
from .pixel_text_decoder import PixelTextDecoder, binarize
from .prompt_encoder import PromptEncoder
from .self_prompting import SelfPromptingModule


@dataclass
class ImageEmbedding:
    """Encoder output for one image, kept on-device for reuse."""

    data: torch.Tensor  # [C, hw, hw]
    profile: ScaleProfile

    def __post_init__(self) -> None:
        expect = (
            self.profile.embed_dim,
            self.profile.embed_hw,
            self.profile.embed_hw,
        )
        if tuple(self.data.shape) != expect:
            raise ValidationError(
                f"embedding shape {tuple(self.data.shape)} != expected {expect}"
            )


@dataclass
class PixelTextOutput:
    lr_logits: np.ndarray  # [lr, lr]
    hr_logits: np.ndarray | None  # [hr, hr]
    iou_pred: float
    token: np.ndarray  # [C]


@dataclass
class HierPrediction:
    """Per-point hierarchy logits. Word kernels come at two resolutions."""

    word_kernel_lr: np.ndarray  # [lr, lr]
    word_kernel_hr: np.ndarray  # [word_hr, word_hr]
    line: np.ndarray  # [lr, lr]
    para: np.ndarray  # [lr, lr]
    iou_line: float
    iou_para: float


class TextHierNet(nn.Module):
    def __init__(
        self,
        profile: ScaleProfile | str = "desk",
        use_refiner: bool = True,
        learned_tokens: bool = False,
    ) -> None:
        super().__init__()
        if isinstance(profile, str):
            profile = get_profile(profile)
        self.profile = profile
        self.image_encoder = ImageEncoder(profile)
        self.prompt_encoder = PromptEncoder(profile)
        self.self_prompting = SelfPromptingModule(
            profile, use_refiner=use_refiner, learned_tokens=learned_tokens
        )
        self.pixel_text_decoder = PixelTextDecoder(profile)
        self.hierarchy_decoder = HierarchyDecoder(profile)
        self.call_counts = {"pixel_text_decoder": 0, "hierarchy_decoder": 0}

    # ---------------------------------------------------------------- utils
    def image_to_tensor(self, image: np.ndarray) -> torch.Tensor:
        size = self.profile.input_size
        if image.shape != (size, size, 3):
            raise ValidationError(
                f"expected {size}x{size}x3 image, got {image.shape}"
            )
        x = torch.from_numpy(np.ascontiguousarray(image)).float()
        return x.permute(2, 0, 1).unsqueeze(0)

    def device(self) -> torch.device:
        return self.image_encoder.pos_embed.device

    # ------------------------------------------------------ training graphs
    def embed_batch(self, images: torch.Tensor) -> torch.Tensor:
        """[B, 3, H, W] raw 0..255 floats -> [B, C, hw, hw], grads enabled."""
        return self.image_encoder(self.image_encoder.preprocess(images))

    def text_forward(self, embeddings: torch.Tensor, use_hr: bool = True) -> dict:
        self.call_counts["pixel_text_decoder"] += 1
        prompts = self.self_prompting(embeddings)
        return self.pixel_text_decoder(
            embeddings, self.prompt_encoder.dense_pe(), prompts, use_hr=use_hr
        )

    def hierarchy_forward(
        self, embeddings: torch.Tensor, point_tokens: torch.Tensor
    ) -> dict:
        self.call_counts["hierarchy_decoder"] += 1
        return self.hierarchy_decoder(
            embeddings, self.prompt_encoder.dense_pe(), point_tokens
        )

    # ----------------------------------------------------- inference wrappers
    @torch.no_grad()
    def embed_image(self, image: np.ndarray) -> ImageEmbedding:
        x = self.image_to_tensor(image).to(self.device())
        emb = self.embed_batch(x)[0]
        return ImageEmbedding(data=emb, profile=self.profile)

    @torch.no_grad()
    def decode_pixel_text(
        self, embedding: ImageEmbedding, use_hr: bool = True
    ) -> PixelTextOutput:
        out = self.text_forward(embedding.data.unsqueeze(0), use_hr=use_hr)
        hr = out["hr_logits"]
        return PixelTextOutput(
            lr_logits=out["lr_logits"][0].cpu().numpy(),
            hr_logits=None if hr is None else hr[0].cpu().numpy(),
            iou_pred=float(out["iou_pred"][0]),
            token=out["token"][0].cpu().numpy(),
        )

    @torch.no_grad()
    def decode_hierarchy(
        self, embedding: ImageEmbedding, points: np.ndarray
    ) -> list[HierPrediction]:
        points = np.asarray(points, dtype=np.float32).reshape(-1, 2)
        if len(points) == 0:
            return []
        pts = torch.from_numpy(points).to(self.device())
        tokens = self.prompt_encoder.encode_points(pts)
        out = self.hierarchy_forward(embedding.data.unsqueeze(0), tokens)
        preds = []
        for i in range(len(points)):
            preds.append(
                HierPrediction(
                    word_kernel_lr=out["word_lr"][i].cpu().numpy(),
                    word_kernel_hr=out["word_hr"][i].cpu().numpy(),
                    line=out["line_lr"][i].cpu().numpy(),
                    para=out["para_lr"][i].cpu().numpy(),
                    iou_line=float(out["iou_line"][i]),
                    iou_para=float(out["iou_para"][i]),
                )
            )
        return preds

    def binarize(self, logits: torch.Tensor | np.ndarray) -> np.ndarray:
        """Upsample logits to input resolution and threshold at 0."""
        t = torch.as_tensor(logits)
        return binarize(t, self.profile.input_size).cpu().numpy()

    # ------------------------------------------------------------ parameters
    def trainable_parameters(self) -> list[torch.nn.Parameter]:
        return [p for _, p in self.named_trainable_parameters()]

    def named_trainable_parameters(self):
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    def frozen_checksums(self) -> dict:
        """sha256 per frozen parameter/buffer; must not move during training."""
        sums = {}
        for name, param in self.named_parameters():
            if not param.requires_grad:
                data = param.detach().cpu().contiguous().numpy()
                sums[name] = hashlib.sha256(data.tobytes()).hexdigest()
        for name, buf in self.named_buffers():
            data = buf.detach().cpu().contiguous().numpy()
            sums[f"buffer:{name}"] = hashlib.sha256(data.tobytes()).hexdigest()
        return sums

    # ------------------------------------------------------------------ flops
    def flops_breakdown(self) -> dict:
        """Analytic multiply-accumulate counts for one full forward pass
        (pixel-text path with one point prompt on the hierarchy path)."""
        prof = self.profile
        c = prof.embed_dim
        hw = prof.embed_hw
        n_cells = hw * hw
        lr, hr = prof.lr_mask_size, prof.hr_mask_size
        lr_dim, hr_dim = prof.lr_mask_dim, prof.hr_mask_dim
        wh = prof.word_hr_size
        n_tok = prof.prompt_token_count

        def linear(rows: int, din: int, dout: int) -> int:
            return rows * din * dout

        def conv(out_hw: int, cin: int, cout: int, k: int) -> int:
            return out_hw * out_hw * cin * cout * k * k

        encoder = self.image_encoder.flops()

        sp = (
            conv(hw, c, n_tok, 3)
            + 3 * conv(hw, n_tok, n_tok, 3)
            + n_tok * c * n_cells  # tokenize pooling
        )
        if self.self_prompting.refiner is not None:
            sp += (
                4 * linear(n_tok, c, c)  # self attention projections
                + 2 * n_tok * n_tok * c
                + 2 * linear(n_tok, c, c)  # cross attention q + out
                + 2 * linear(n_cells, c, c)  # cross attention k, v
                + 2 * n_tok * n_cells * c
                + 2 * linear(n_tok, c, 2 * c)  # FFN
            )

        def two_way(tokens: int) -> int:
            half = c // 2
            per_layer = (
                4 * linear(tokens, c, c)
                + 2 * tokens * tokens * c  # token self attention
                + linear(tokens, c, half)
                + 2 * linear(n_cells, c, half)
                + linear(tokens, half, c)
                + 2 * tokens * n_cells * half  # tokens -> image
                + 2 * linear(tokens, c, 2 * c)  # MLP
                + linear(n_cells, c, half)
                + 2 * linear(tokens, c, half)
                + linear(n_cells, half, c)
                + 2 * tokens * n_cells * half  # image -> tokens
            )
            final = (
                linear(tokens, c, half)
                + 2 * linear(n_cells, c, half)
                + linear(tokens, half, c)
                + 2 * tokens * n_cells * half
            )
            return 2 * per_layer + final

        def upscale_and_dot() -> int:
            return (
                conv(2 * hw, c, c // 4, 2)
                + conv(lr, c // 4, lr_dim, 2)
                + 2 * c * c
                + c * lr_dim  # hypernet MLP
                + lr * lr * lr_dim  # mask dot product
            )

        text_decoder = two_way(prof.n_out + n_tok) + upscale_and_dot() + 3 * c * c
        hier_decoder = (
            two_way(prof.n_out + prof.n_p)
            + upscale_and_dot() * 3  # word/line/para heads share features
            + conv(lr, lr_dim, hr_dim, 1)
            + 4 * conv(wh, hr_dim, hr_dim, 3)
            + 2 * c * c
            + c * hr_dim
            + wh * wh * hr_dim
        )

        hr_branch = (
            conv(hr // 2, lr_dim, hr_dim, 2)
            + conv(hr, hr_dim, hr_dim, 2)
            + 4 * conv(hr, hr_dim, hr_dim, 3)
            + 2 * c * c
            + c * hr_dim
            + hr * hr * hr_dim
        )

        total = encoder + sp + text_decoder + hier_decoder + hr_branch
        return {
            "encoder": encoder,
            "self_prompting": sp,
            "text_decoder": text_decoder,
            "hierarchy_decoder": hier_decoder,
            "hr_branch": hr_branch,
            "total": total,
        }


def build_model(
    profile: str | ScaleProfile = "desk",
    encoder: str | None = None,
    seed: int | None = None,
    **kwargs,
) -> TextHierNet:
    """Construct a model, optionally with a fixed init seed."""
    if isinstance(profile, str):
        profile = get_profile(profile, encoder=encoder)
    if seed is not None:
        torch.manual_seed(seed)
    return TextHierNet(profile, **kwargs)
