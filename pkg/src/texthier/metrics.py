"""Evaluation protocols: foreground pixel metrics, panoptic instance
quality, average precision, and layout quality.

Pixel metrics accumulate intersection/union and TP/FP/FN counts globally
over the whole dataset before dividing; they are not per-image averages.

Instance metrics follow the panoptic protocol: predictions and ground truth
match greedily at IoU strictly above 0.5 (which makes matches unique when
instances on each side do not overlap heavily), segmentation quality T is
the mean matched IoU, recognition quality F is the detection F-score, and
PQ = F * T. Ground-truth instances flagged as don't-care (illegible text)
are excluded from matching, and unmatched predictions whose area lies mostly
inside don't-care regions are not counted as false positives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

MATCH_IOU = 0.5
DONT_CARE_OVERLAP = 0.5
AP_THRESHOLDS = [0.5 + 0.05 * i for i in range(10)]


def _flat_bool(mask: np.ndarray) -> np.ndarray:
    return np.asarray(mask).astype(bool).reshape(-1)


class PixelTally:
    """Global accumulator for foreground IoU and F-score."""

    def __init__(self) -> None:
        self.inter = 0
        self.union = 0
        self.tp = 0
        self.fp = 0
        self.fn = 0

    def add(self, pred: np.ndarray, target: np.ndarray) -> None:
        p = _flat_bool(pred)
        t = _flat_bool(target)
        if p.shape != t.shape:
            raise ValidationError(
                f"pred/target shape mismatch: {pred.shape} vs {target.shape}"
            )
        inter = int(np.count_nonzero(p & t))
        self.inter += inter
        self.union += int(np.count_nonzero(p | t))
        self.tp += inter
        self.fp += int(np.count_nonzero(p & ~t))
        self.fn += int(np.count_nonzero(~p & t))

    @property
    def fg_iou(self) -> float:
        return self.inter / self.union if self.union else 0.0

    @property
    def fg_fscore(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


def fg_iou(preds: list[np.ndarray], targets: list[np.ndarray]) -> float:
    tally = PixelTally()
    for p, t in zip(preds, targets):
        tally.add(p, t)
    return tally.fg_iou


def fg_fscore(preds: list[np.ndarray], targets: list[np.ndarray]) -> float:
    tally = PixelTally()
    for p, t in zip(preds, targets):
        tally.add(p, t)
    return tally.fg_fscore


@dataclass
class InstanceEvalReport:
    """Panoptic-style instance evaluation results.

    Identities that always hold: pq == f * t, and f == 2*p*r/(p+r) when
    p + r > 0. With zero predictions, precision is 0 by convention.
    """

    tp: int
    fp: int
    fn: int
    matched_ious: list[float] = field(default_factory=list)

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def f(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0

    @property
    def t(self) -> float:
        return float(np.mean(self.matched_ious)) if self.matched_ious else 0.0

    @property
    def pq(self) -> float:
        return self.f * self.t

    def merge(self, other: "InstanceEvalReport") -> "InstanceEvalReport":
        return InstanceEvalReport(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            matched_ious=self.matched_ious + other.matched_ious,
        )

    def as_dict(self) -> dict:
        return {
            "pq": self.pq,
            "f": self.f,
            "precision": self.precision,
            "recall": self.recall,
            "t": self.t,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


def _pairwise_iou(preds: list[np.ndarray], gts: list[np.ndarray]) -> np.ndarray:
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)), dtype=np.float64)
    p = np.stack([_flat_bool(m) for m in preds]).astype(np.float64)
    g = np.stack([_flat_bool(m) for m in gts]).astype(np.float64)
    inter = p @ g.T
    union = p.sum(1)[:, None] + g.sum(1)[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def match_instances(
    preds: list[np.ndarray], gts: list[np.ndarray], iou_threshold: float = MATCH_IOU
) -> list[tuple[int, int, float]]:
    """Greedy unique matching on IoU strictly above the threshold.

    Pairs are taken in descending IoU order; each prediction and each ground
    truth is used at most once. Returns (pred_idx, gt_idx, iou) triples.
    """
    iou = _pairwise_iou(preds, gts)
    pairs = [
        (i, j, float(iou[i, j]))
        for i in range(iou.shape[0])
        for j in range(iou.shape[1])
        if iou[i, j] > iou_threshold
    ]
    pairs.sort(key=lambda x: (-x[2], x[0], x[1]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = []
    for i, j, v in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j, v))
    return matches


def panoptic_eval(
    preds: list[np.ndarray],
    gts: list[np.ndarray],
    gt_dont_care: list[bool] | None = None,
    iou_threshold: float = MATCH_IOU,
) -> InstanceEvalReport:
    """Evaluate one image's predicted instances against ground truth.

    Don't-care ground truths are removed before matching and never counted
    as false negatives. An unmatched prediction is forgiven (not a false
    positive) when more than half of its area lies inside the union of
    don't-care regions.
    """
    if gt_dont_care is None:
        gt_dont_care = [False] * len(gts)
    if len(gt_dont_care) != len(gts):
        raise ValidationError("gt_dont_care length must match gts")
    care_gts = [g for g, dc in zip(gts, gt_dont_care) if not dc]
    ignore_gts = [g for g, dc in zip(gts, gt_dont_care) if dc]

    matches = match_instances(preds, care_gts, iou_threshold)
    matched_preds = {i for i, _, _ in matches}
    ious = [v for _, _, v in matches]

    fp = 0
    ignore_union = None
    if ignore_gts:
        ignore_union = np.zeros_like(_flat_bool(ignore_gts[0]))
        for g in ignore_gts:
            ignore_union |= _flat_bool(g)
    for i, pred in enumerate(preds):
        if i in matched_preds:
            continue
        p = _flat_bool(pred)
        area = np.count_nonzero(p)
        if area == 0:
            continue
        if ignore_union is not None:
            inside = np.count_nonzero(p & ignore_union)
            if inside / area > DONT_CARE_OVERLAP:
                continue
        fp += 1

    return InstanceEvalReport(
        tp=len(matches),
        fp=fp,
        fn=len(care_gts) - len(matches),
        matched_ious=ious,
    )


def ap_eval(
    scored_preds: list[list[tuple[np.ndarray, float]]],
    gts: list[list[np.ndarray]],
    thresholds: list[float] | None = None,
) -> dict:
    """Average precision over IoU thresholds 0.50:0.05:0.95.

    Inputs are per-image lists: each prediction is a (mask, score) pair.
    For each threshold, predictions are ranked by score across the whole
    dataset, matched greedily per image (IoU strictly above the threshold,
    best available ground truth first), and AP is the area under the
    monotone precision envelope of the resulting PR curve.
    """
    if thresholds is None:
        thresholds = AP_THRESHOLDS
    if len(scored_preds) != len(gts):
        raise ValidationError("scored_preds and gts must align per image")

    n_gt = sum(len(g) for g in gts)
    per_image_iou = [
        _pairwise_iou([m for m, _ in preds], gt_list)
        for preds, gt_list in zip(scored_preds, gts)
    ]
    # Flatten to (score, image_idx, pred_idx) ranked once; reused per threshold.
    ranked = sorted(
        (
            (-float(score), img, idx)
            for img, preds in enumerate(scored_preds)
            for idx, (_, score) in enumerate(preds)
        ),
    )

    aps = {}
    for thr in thresholds:
        used: list[set[int]] = [set() for _ in gts]
        tps = []
        for neg_score, img, idx in ranked:
            iou_row = per_image_iou[img][idx] if per_image_iou[img].size else np.zeros(0)
            best_j, best_v = -1, thr
            for j, v in enumerate(iou_row):
                if j in used[img]:
                    continue
                if v > best_v:
                    best_j, best_v = j, float(v)
            if best_j >= 0:
                used[img].add(best_j)
                tps.append(1)
            else:
                tps.append(0)
        if n_gt == 0:
            aps[thr] = 0.0
            continue
        tp_cum = np.cumsum(tps, dtype=np.float64)
        ranks = np.arange(1, len(tps) + 1, dtype=np.float64)
        precision = tp_cum / ranks if len(tps) else np.zeros(0)
        recall = tp_cum / n_gt if len(tps) else np.zeros(0)
        # Monotone envelope, integrated at recall change points.
        ap = 0.0
        if len(tps):
            prec_env = np.maximum.accumulate(precision[::-1])[::-1]
            prev_r = 0.0
            for r, p in zip(recall, prec_env):
                if r > prev_r:
                    ap += (r - prev_r) * p
                    prev_r = r
        aps[thr] = float(ap)

    mean_ap = float(np.mean([aps[t] for t in thresholds])) if thresholds else 0.0
    return {
        "ap": mean_ap,
        "ap50": aps.get(0.5, 0.0),
        "ap75": aps.get(0.75, 0.0),
        "per_threshold": {f"{t:.2f}": v for t, v in aps.items()},
    }


def layout_entities(
    word_masks: list[np.ndarray], groups: list[list[int]]
) -> list[np.ndarray]:
    """Union the member word masks of each group into one entity mask."""
    entities = []
    for members in groups:
        if not members:
            continue
        acc = np.zeros_like(np.asarray(word_masks[members[0]], dtype=bool))
        for m in members:
            acc |= np.asarray(word_masks[m], dtype=bool)
        entities.append(acc)
    return entities


def layout_eval(
    pred_word_masks: list[np.ndarray],
    pred_groups: list[list[int]],
    gt_word_masks: list[np.ndarray],
    gt_groups: list[list[int]],
    gt_dont_care: list[bool] | None = None,
    iou_threshold: float = MATCH_IOU,
) -> InstanceEvalReport:
    """Panoptic evaluation of paragraph entities built as unions of words.

    Both sides are converted to entity masks (union of member word masks per
    paragraph group) before the standard panoptic protocol runs, so layout
    quality reflects grouping decisions rather than raw mask extents.
    """
    pred_entities = layout_entities(pred_word_masks, pred_groups)
    gt_entities = layout_entities(gt_word_masks, gt_groups)
    dc = None
    if gt_dont_care is not None:
        if len(gt_dont_care) != len(gt_groups):
            raise ValidationError("gt_dont_care must align with gt_groups")
        dc = [d for d, g in zip(gt_dont_care, gt_groups) if g]
    return panoptic_eval(pred_entities, gt_entities, dc, iou_threshold)
