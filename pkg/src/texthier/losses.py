"""Training losses.

Pixel-text supervision uses focal + dice + score regression at both the
low-res and high-res logit maps, weighted 20:1:1. Word kernels use BCE +
dice (1:1) at both word resolutions. Lines and paragraphs use BCE + dice +
score regression (1:1:1) at low res. The step loss combines the branches as

    total = text + word + line + 0.5 * paragraph

All losses accept raw logits. Targets must be binary; ground truth is
resampled to each supervised resolution by nearest-neighbor (cell-center
convention), never interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .errors import ValidationError

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0
DICE_EPS = 1.0
TEXT_FOCAL_WEIGHT = 20.0
PARAGRAPH_WEIGHT = 0.5


def _check_binary(targets: torch.Tensor) -> None:
    bad = ((targets != 0) & (targets != 1)).any()
    if bool(bad):
        raise ValidationError("loss targets must be binary (0/1)")


def downsample_mask(mask: torch.Tensor, size: int) -> torch.Tensor:
    """Nearest-neighbor downsample of the trailing two dims, sampling each
    output cell at its center. Keeps binary masks binary."""
    h, w = mask.shape[-2], mask.shape[-1]
    if h == size and w == size:
        return mask
    ys = ((torch.arange(size, dtype=torch.float64) + 0.5) * h / size).long().clamp(max=h - 1)
    xs = ((torch.arange(size, dtype=torch.float64) + 0.5) * w / size).long().clamp(max=w - 1)
    return mask[..., ys, :][..., :, xs]


def focal_loss(
    logits: torch.Tensor,
    targets: torch.Tensor,
    alpha: float = FOCAL_ALPHA,
    gamma: float = FOCAL_GAMMA,
) -> torch.Tensor:
    """Mean focal loss over every element."""
    _check_binary(targets)
    targets = targets.to(logits.dtype)
    ce = F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
    p = torch.sigmoid(logits)
    p_t = p * targets + (1 - p) * (1 - targets)
    alpha_t = alpha * targets + (1 - alpha) * (1 - targets)
    return (alpha_t * (1 - p_t) ** gamma * ce).mean()


def dice_loss(
    logits: torch.Tensor, targets: torch.Tensor, eps: float = DICE_EPS
) -> torch.Tensor:
    """1 - soft dice, computed per mask and averaged over the leading dims."""
    targets = targets.to(logits.dtype)
    p = torch.sigmoid(logits)
    flat_p = p.reshape(*p.shape[:-2], -1) if p.dim() > 2 else p.reshape(1, -1)
    flat_t = (
        targets.reshape(*targets.shape[:-2], -1)
        if targets.dim() > 2
        else targets.reshape(1, -1)
    )
    inter = (flat_p * flat_t).sum(-1)
    denom = flat_p.sum(-1) + flat_t.sum(-1)
    dice = (2 * inter + eps) / (denom + eps)
    return (1 - dice).mean()


def bce_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, targets.to(logits.dtype))


def measured_iou(mask_logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """IoU of the thresholded logits against the target, no gradient.

    Empty-vs-empty measures 0, matching the layout convention; background
    prompts therefore drive the score head toward 0, which is what the
    generation-time score filter relies on.
    """
    with torch.no_grad():
        pred = mask_logits > 0
        tgt = targets > 0.5
        flat_p = pred.reshape(*pred.shape[:-2], -1)
        flat_t = tgt.reshape(*tgt.shape[:-2], -1)
        inter = (flat_p & flat_t).sum(-1).double()
        union = (flat_p | flat_t).sum(-1).double()
        return torch.where(union > 0, inter / union.clamp(min=1), torch.zeros_like(inter))


def iou_mse(
    iou_pred: torch.Tensor, mask_logits: torch.Tensor, targets: torch.Tensor
) -> torch.Tensor:
    """Squared error between the predicted score and the measured IoU.

    The measured IoU is a constant; gradient flows only into the prediction.
    """
    measured = measured_iou(mask_logits, targets).to(iou_pred.dtype)
    return ((iou_pred - measured) ** 2).mean()


@dataclass
class LossBreakdown:
    """Per-branch loss values for one step, as plain floats for logging.

    ``total`` is always exactly ``l_text + l_word + l_line + 0.5 * l_para``
    in float64 arithmetic.
    """

    l_text: float
    l_word: float
    l_line: float
    l_para: float
    total: float
    terms: dict = field(default_factory=dict)

    @staticmethod
    def build(l_text: float, l_word: float, l_line: float, l_para: float,
              terms: dict | None = None) -> "LossBreakdown":
        return LossBreakdown(
            l_text=l_text,
            l_word=l_word,
            l_line=l_line,
            l_para=l_para,
            total=l_text + l_word + l_line + PARAGRAPH_WEIGHT * l_para,
            terms=terms or {},
        )

    def as_dict(self) -> dict:
        return {
            "l_text": self.l_text,
            "l_word": self.l_word,
            "l_line": self.l_line,
            "l_para": self.l_para,
            "total": self.total,
            "terms": self.terms,
        }


def text_loss(
    lr_logits: torch.Tensor,
    hr_logits: torch.Tensor,
    iou_pred: torch.Tensor,
    target: torch.Tensor,
) -> tuple[torch.Tensor, dict]:
    """Pixel-text branch loss at both resolutions.

    ``target`` is the full-resolution binary text mask; it is downsampled to
    the low-res grid by nearest neighbor. The score regression compares the
    same predicted score against the IoU measured at each resolution.
    """
    _check_binary(target)
    target = target.to(lr_logits.dtype)
    terms = {}
    loss = lr_logits.new_zeros(())
    for tag, logits in (("lr", lr_logits), ("hr", hr_logits)):
        tgt = downsample_mask(target, logits.shape[-1])
        lf = focal_loss(logits, tgt)
        ld = dice_loss(logits, tgt)
        lm = iou_mse(iou_pred, logits, tgt)
        loss = loss + TEXT_FOCAL_WEIGHT * lf + ld + lm
        terms[f"text_focal_{tag}"] = float(lf.detach())
        terms[f"text_dice_{tag}"] = float(ld.detach())
        terms[f"text_ioumse_{tag}"] = float(lm.detach())
    return loss, terms


def hierarchy_loss(
    word_lr: torch.Tensor,
    word_hr: torch.Tensor,
    line_lr: torch.Tensor,
    para_lr: torch.Tensor,
    iou_line: torch.Tensor,
    iou_para: torch.Tensor,
    gt_word: torch.Tensor,
    gt_line: torch.Tensor,
    gt_para: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, dict]:
    """Word/line/paragraph losses for a batch of K prompt points.

    Ground-truth masks arrive at input resolution and are downsampled per
    head. K = 0 yields exact zeros (a textless batch must not poison the
    step with NaNs). Returns (word, line, para) loss tensors plus logged
    sub-terms.
    """
    k = word_lr.shape[0] if word_lr.dim() == 3 else 0
    if k == 0:
        zero = word_lr.new_zeros(())
        return zero.clone(), zero.clone(), zero.clone(), {}
    for gt in (gt_word, gt_line, gt_para):
        _check_binary(gt)

    terms = {}
    w_parts = []
    for tag, logits in (("lr", word_lr), ("hr", word_hr)):
        tgt = downsample_mask(gt_word.to(logits.dtype), logits.shape[-1])
        lb = bce_loss(logits, tgt)
        ld = dice_loss(logits, tgt)
        w_parts.append(lb + ld)
        terms[f"word_bce_{tag}"] = float(lb.detach())
        terms[f"word_dice_{tag}"] = float(ld.detach())
    l_word = w_parts[0] + w_parts[1]

    def level(logits: torch.Tensor, score: torch.Tensor, gt: torch.Tensor, tag: str):
        tgt = downsample_mask(gt.to(logits.dtype), logits.shape[-1])
        lb = bce_loss(logits, tgt)
        ld = dice_loss(logits, tgt)
        lm = iou_mse(score, logits, tgt)
        terms[f"{tag}_bce"] = float(lb.detach())
        terms[f"{tag}_dice"] = float(ld.detach())
        terms[f"{tag}_ioumse"] = float(lm.detach())
        return lb + ld + lm

    l_line = level(line_lr, iou_line, gt_line, "line")
    l_para = level(para_lr, iou_para, gt_para, "para")
    return l_word, l_line, l_para, terms
