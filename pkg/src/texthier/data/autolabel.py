"""Semi-automatic pixel-text labeling.

Runs sliding-window segmentation over raw images and attaches the result as
a draft pixel-text layer flagged "unreviewed". A human (or the browser
workbench) later flips individual images to "reviewed"; the flag round-trips
through dataset export/load so review progress is never lost.
"""

from __future__ import annotations

import numpy as np

from ..inference import (
    WINDOW_SIZE,
    WINDOW_STRIDE,
    model_logits_fn,
    sliding_window_segment,
)
from ..model.network import TextHierNet
from .schema import (
    PIXEL_TEXT_REVIEWED,
    PIXEL_TEXT_UNREVIEWED,
    AnnotationTree,
)


def autolabel_pixel_text(
    model: TextHierNet,
    trees: list[AnnotationTree],
    window: int = WINDOW_SIZE,
    stride: int = WINDOW_STRIDE,
    overwrite: bool = False,
) -> list[AnnotationTree]:
    """Fill in draft pixel-text masks for trees lacking them (in place).

    Existing masks are kept unless ``overwrite``; freshly generated masks
    are always flagged unreviewed.
    """
    fn = model_logits_fn(model)
    for tree in trees:
        if tree.pixel_text is not None and not overwrite:
            continue
        if tree.image is None:
            continue
        mask = sliding_window_segment(tree.image, fn, window=window, stride=stride)
        tree.pixel_text = np.asarray(mask, dtype=bool)
        tree.pixel_text_status = PIXEL_TEXT_UNREVIEWED
    return trees


def mark_reviewed(tree: AnnotationTree) -> AnnotationTree:
    if tree.pixel_text is None:
        raise ValueError(f"{tree.image_id} has no pixel-text layer to review")
    tree.pixel_text_status = PIXEL_TEXT_REVIEWED
    return tree
