"""Inference pipelines.

Automatic mask generation (AMG) produces the full hierarchy without user
input: segment pixel text, sample foreground points, decode each point's
hierarchy prediction in fixed-size batches, drop low-confidence lines,
suppress duplicate lines with Matrix NMS, expand each surviving line's word
kernels into word instances, and cluster the per-line paragraph masks into
a layout. The result keeps lines, word groups, and paragraph masks aligned
index-for-index.

Point-prompted segmentation answers a single click using only the encoder,
the prompt encoder, and the hierarchy decoder; the pixel-text decoder is
never invoked on that path.

Sliding-window segmentation handles images larger than the model input:
fixed-size windows on a regular stride (the last window clamps to the
edge), per-window logits averaged in overlap regions, one final threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
import torch

from .errors import ValidationError
from .geometry import WordInstance, expand_word_kernels, select_clicked_word
from .layout import cluster_members, cluster_paragraphs
from .model.network import HierPrediction, ImageEmbedding, TextHierNet
from .model.pixel_text_decoder import binarize
from . import rle

DEFAULT_POINTS = 1500
DEFAULT_POINT_BATCH = 100
SCORE_FILTER = 0.5
NMS_KEEP = 0.5
WINDOW_SIZE = 512
WINDOW_STRIDE = 384


# ----------------------------------------------------------- point sampling
def sample_foreground_points(
    mask: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform (x, y) samples from a binary mask's foreground.

    Without replacement when the foreground has at least ``count`` pixels,
    with replacement otherwise. An empty mask yields an empty array.
    """
    ys, xs = np.nonzero(np.asarray(mask).astype(bool))
    if len(ys) == 0:
        return np.zeros((0, 2), dtype=np.float32)
    replace = len(ys) < count
    picks = rng.choice(len(ys), size=count, replace=replace)
    return np.stack([xs[picks], ys[picks]], axis=1).astype(np.float32)


# -------------------------------------------------------------- matrix NMS
def matrix_nms(masks: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Parallel soft suppression with a linear decay kernel.

    For each mask j (in descending score order), the decay is

        decay_j = min over higher-scored i of (1 - iou_ij) / (1 - cmax_i)

    where cmax_i is the highest IoU between mask i and anything scored above
    it. Returns the decayed scores aligned with the input order.
    """
    masks = np.asarray(masks)
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    if masks.shape[0] != n:
        raise ValidationError("masks and scores must align")
    order = np.argsort(-scores, kind="stable")
    flat = masks.reshape(n, -1).astype(np.float64)[order]
    areas = flat.sum(axis=1)
    inter = flat @ flat.T
    union = areas[:, None] + areas[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)
    iou = np.triu(iou, k=1)  # iou[i, j] for i scored above j
    cmax = iou.max(axis=0)  # per column: best overlap with anything above
    cmax_e = np.tile(cmax[:, None], (1, n))  # cmax_e[i, j] = cmax_i
    decay = (1.0 - iou) / np.maximum(1.0 - cmax_e, 1e-12)
    decay = np.where(np.triu(np.ones((n, n)), k=1) > 0, decay, np.inf)
    decay_j = np.minimum(decay.min(axis=0), 1.0)
    decayed_sorted = scores[order] * decay_j
    out = np.zeros(n, dtype=np.float64)
    out[order] = decayed_sorted
    return out


# ------------------------------------------------------------ result types
@dataclass
class LineResult:
    mask: np.ndarray  # [input, input] bool
    score: float  # model confidence before suppression
    decayed_score: float  # after matrix NMS


@dataclass
class AmgResult:
    """Full-hierarchy output for one image, at model input resolution.

    ``lines``, ``words`` (one word group per line) and ``paragraphs`` are
    aligned: entry i of each belongs to the same surviving line prompt.
    ``layout`` assigns a cluster id per line.
    """

    input_size: int
    original_size: tuple[int, int]
    pixel_text: np.ndarray
    lines: list[LineResult] = field(default_factory=list)
    words: list[list[WordInstance]] = field(default_factory=list)
    paragraphs: list[np.ndarray] = field(default_factory=list)
    layout: list[int] = field(default_factory=list)

    def word_instances(self) -> list[WordInstance]:
        return [w for group in self.words for w in group]

    def word_groups_by_cluster(self) -> list[list[int]]:
        """Word indices (flattened) grouped by layout cluster."""
        n_clusters = max(self.layout) + 1 if self.layout else 0
        groups: list[list[int]] = [[] for _ in range(n_clusters)]
        flat_idx = 0
        for line_idx, group in enumerate(self.words):
            for _ in group:
                groups[self.layout[line_idx]].append(flat_idx)
                flat_idx += 1
        return groups


@dataclass
class AmgConfig:
    points: int = DEFAULT_POINTS
    point_batch: int = DEFAULT_POINT_BATCH
    score_filter: float = SCORE_FILTER
    nms_keep: float = NMS_KEEP
    words_from_hr: bool = True  # use the high-res word kernels
    text_from_hr: bool = True  # pixel text from the high-res logits
    unclip_ratio: float = 1.5
    seed: int = 0
    sliding_window: bool = False
    window: int = WINDOW_SIZE
    stride: int = WINDOW_STRIDE


def decode_points(
    model: TextHierNet,
    embedding: ImageEmbedding,
    points: np.ndarray,
    batch_size: int = DEFAULT_POINT_BATCH,
) -> list[HierPrediction]:
    """Decode hierarchy predictions in fixed-size point batches.

    Results are independent of the batch size: each point attends only to
    its own copy of the image embedding.
    """
    if batch_size <= 0:
        raise ValidationError("batch_size must be positive")
    preds: list[HierPrediction] = []
    for lo in range(0, len(points), batch_size):
        preds.extend(model.decode_hierarchy(embedding, points[lo : lo + batch_size]))
    return preds


def prepare_image(image: np.ndarray, input_size: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Resize an RGB image to the model's square input size."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"expected [H, W, 3] image, got {image.shape}")
    original = (image.shape[0], image.shape[1])
    if original != (input_size, input_size):
        image = cv2.resize(image, (input_size, input_size), interpolation=cv2.INTER_LINEAR)
    return image, original


def amg(
    model: TextHierNet,
    image: np.ndarray,
    cfg: AmgConfig | None = None,
    embedding: ImageEmbedding | None = None,
) -> AmgResult:
    cfg = cfg or AmgConfig()
    size = model.profile.input_size
    source = image
    image, original = prepare_image(image, size)

    if cfg.sliding_window:
        # Pixel text at native resolution via windowing, then brought to the
        # working grid; points and hierarchy always run at input size.
        big = sliding_window_segment(
            source, model_logits_fn(model), window=cfg.window, stride=cfg.stride
        )
        if original == (size, size):
            pixel_text = big
        else:
            pixel_text = cv2.resize(
                big.astype(np.uint8), (size, size), interpolation=cv2.INTER_NEAREST
            ).astype(bool)
        if embedding is None:
            embedding = model.embed_image(image)
    else:
        if embedding is None:
            embedding = model.embed_image(image)
        text_out = model.decode_pixel_text(embedding, use_hr=cfg.text_from_hr)
        logits = (
            text_out.hr_logits if cfg.text_from_hr and text_out.hr_logits is not None
            else text_out.lr_logits
        )
        pixel_text = model.binarize(logits)

    result = AmgResult(
        input_size=size, original_size=original, pixel_text=pixel_text
    )
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    points = sample_foreground_points(pixel_text, cfg.points, rng)
    if len(points) == 0:
        return result

    preds = decode_points(model, embedding, points, cfg.point_batch)

    # Confidence filter comes FIRST: garbage predictions must not take part
    # in suppression, where they could shadow genuine lines.
    kept = [p for p in preds if p.iou_line >= cfg.score_filter]
    kept = [p for p in kept if (p.line > 0).any()]
    if not kept:
        return result

    lr_masks = np.stack([p.line > 0 for p in kept])
    scores = np.array([p.iou_line for p in kept])
    decayed = matrix_nms(lr_masks, scores)
    survivors = [
        (kept[i], float(scores[i]), float(decayed[i]))
        for i in range(len(kept))
        if decayed[i] >= cfg.nms_keep
    ]
    survivors.sort(key=lambda t: -t[2])

    para_masks = []
    for pred, score, dec in survivors:
        line_mask = model.binarize(pred.line)
        kernel_logits = pred.word_kernel_hr if cfg.words_from_hr else pred.word_kernel_lr
        kernel_mask = model.binarize(kernel_logits)
        words = expand_word_kernels(kernel_mask, score=score, unclip_ratio=cfg.unclip_ratio)
        para_mask = model.binarize(pred.para)
        result.lines.append(LineResult(mask=line_mask, score=score, decayed_score=dec))
        result.words.append(words)
        para_masks.append(para_mask)
    result.paragraphs = para_masks
    result.layout = cluster_paragraphs(np.stack(para_masks)) if para_masks else []
    return result


# ------------------------------------------------------------- promptable
@dataclass
class PromptResult:
    """Answer to one click: selected word plus its line and paragraph."""

    click: tuple[float, float]
    word: WordInstance | None
    word_candidates: list[WordInstance]
    line_mask: np.ndarray
    para_mask: np.ndarray
    iou_line: float
    iou_para: float


def promptable_segment(
    model: TextHierNet,
    embedding: ImageEmbedding,
    click: tuple[float, float],
    words_from_hr: bool = True,
    unclip_ratio: float = 1.5,
) -> PromptResult:
    """Segment the word/line/paragraph under a single foreground click.

    Only the hierarchy path runs; the pixel-text decoder is untouched.
    """
    point = np.array([click], dtype=np.float32)
    pred = model.decode_hierarchy(embedding, point)[0]
    kernel_logits = pred.word_kernel_hr if words_from_hr else pred.word_kernel_lr
    kernel_mask = model.binarize(kernel_logits)
    candidates = expand_word_kernels(
        kernel_mask, score=pred.iou_line, unclip_ratio=unclip_ratio
    )
    chosen = select_clicked_word(candidates, click)
    return PromptResult(
        click=(float(click[0]), float(click[1])),
        word=None if chosen is None else candidates[chosen],
        word_candidates=candidates,
        line_mask=model.binarize(pred.line),
        para_mask=model.binarize(pred.para),
        iou_line=pred.iou_line,
        iou_para=pred.iou_para,
    )


# ---------------------------------------------------------- sliding window
def tile_origins(length: int, window: int, stride: int) -> list[int]:
    """Window origins covering [0, length): regular stride, last clamped.

    Requires stride <= window; larger strides would leave gaps between
    consecutive windows.
    """
    if stride > window:
        raise ValidationError(f"stride {stride} exceeds window {window}")
    if window >= length:
        return [0]
    origins = list(range(0, length - window, stride))
    origins.append(length - window)
    return origins


def model_logits_fn(model: TextHierNet):
    """Adapt the model into a crop -> logits function for windowing.

    The crop is resized to the model input, decoded, and the high-res
    logits are resized back to the crop's own resolution.
    """

    def fn(crop: np.ndarray) -> np.ndarray:
        size = model.profile.input_size
        h, w = crop.shape[:2]
        resized = cv2.resize(crop, (size, size), interpolation=cv2.INTER_LINEAR)
        emb = model.embed_image(resized)
        out = model.decode_pixel_text(emb)
        logits = out.hr_logits if out.hr_logits is not None else out.lr_logits
        t = torch.from_numpy(logits)[None, None].float()
        up = torch.nn.functional.interpolate(
            t, size=(h, w), mode="bilinear", align_corners=False
        )
        return up[0, 0].numpy()

    return fn


def sliding_window_segment(
    image: np.ndarray,
    logits_fn,
    window: int = WINDOW_SIZE,
    stride: int = WINDOW_STRIDE,
    return_logits: bool = False,
):
    """Tile an image, average per-window logits in overlaps, threshold once.

    Images smaller than the window are reflect-padded up to window size and
    cropped back afterwards.
    """
    if stride <= 0 or window <= 0:
        raise ValidationError("window and stride must be positive")
    h, w = image.shape[:2]
    pad_h, pad_w = max(0, window - h), max(0, window - w)
    padded = image
    if pad_h or pad_w:
        padded = np.pad(
            image, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect"
        )
    ph, pw = padded.shape[:2]
    acc = np.zeros((ph, pw), dtype=np.float64)
    cover = np.zeros((ph, pw), dtype=np.int64)
    for y0 in tile_origins(ph, window, stride):
        for x0 in tile_origins(pw, window, stride):
            crop = padded[y0 : y0 + window, x0 : x0 + window]
            logits = logits_fn(crop)
            if logits.shape != (window, window):
                raise ValidationError(
                    f"logits_fn returned {logits.shape}, expected {(window, window)}"
                )
            acc[y0 : y0 + window, x0 : x0 + window] += logits
            cover[y0 : y0 + window, x0 : x0 + window] += 1
    assert (cover > 0).all(), "tiling must cover every pixel"
    mean_logits = (acc / cover)[:h, :w]
    mask = mean_logits > 0
    if return_logits:
        return mask, mean_logits
    return mask


# ------------------------------------------------------------ dump format
def amg_to_dump(result: AmgResult, image_id: str) -> dict:
    """Serializable prediction record with RLE masks per hierarchy level."""
    return {
        "image_id": image_id,
        "input_size": result.input_size,
        "original_size": list(result.original_size),
        "pixel_text": rle.encode(result.pixel_text),
        "lines": [
            {
                "rle": rle.encode(line.mask),
                "score": line.score,
                "decayed_score": line.decayed_score,
            }
            for line in result.lines
        ],
        "words": [
            [
                {
                    "polygon": [[float(x), float(y)] for x, y in w.polygon],
                    "rle": rle.encode(w.mask),
                    "score": w.score,
                }
                for w in group
            ]
            for group in result.words
        ],
        "paragraphs": [rle.encode(m) for m in result.paragraphs],
        "layout": list(result.layout),
    }


def prompt_to_payload(result: PromptResult) -> dict:
    """Canonical JSON payload for one prompt answer (service wire format)."""
    return {
        "click": [result.click[0], result.click[1]],
        "word": None
        if result.word is None
        else {
            "polygon": [[float(x), float(y)] for x, y in result.word.polygon],
            "rle": rle.encode(result.word.mask),
            "score": result.word.score,
        },
        "line": {"rle": rle.encode(result.line_mask), "score": result.iou_line},
        "paragraph": {"rle": rle.encode(result.para_mask), "score": result.iou_para},
    }
