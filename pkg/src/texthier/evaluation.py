"""Dataset-level evaluation: runs AMG over annotated images and scores every
metric family (foreground pixel metrics, instance PQ per hierarchy level,
AP for lines, and layout quality from word grouping).

Ground-truth paragraph entities for layout scoring are unions of member
word masks, mirroring how predicted entities are built from clustered word
instances; raw paragraph polygons are scored separately under the
"paragraph" key.
"""

from __future__ import annotations

import numpy as np

from .data.schema import AnnotationTree
from .inference import AmgConfig, AmgResult, amg
from .metrics import (
    InstanceEvalReport,
    PixelTally,
    ap_eval,
    layout_eval,
    panoptic_eval,
)
from .model.network import TextHierNet


def evaluate_amg_result(
    result: AmgResult, tree: AnnotationTree
) -> dict:
    """Score one image's AMG output against its annotation tree."""
    h, w = tree.height, tree.width
    assert (h, w) == (result.input_size, result.input_size), (
        "evaluation expects annotations at model input resolution"
    )
    word_masks_gt = tree.word_masks()
    word_dc = [not wd.legible for _, _, wd in tree.iter_words()]
    line_masks_gt = tree.line_masks()
    line_dc = [not ln.legible for _, ln in tree.iter_lines()]
    para_masks_gt = tree.paragraph_masks()

    pred_words = [wi.mask for wi in result.word_instances()]
    word_report = panoptic_eval(pred_words, word_masks_gt, word_dc)

    pred_lines = [ln.mask for ln in result.lines]
    line_report = panoptic_eval(pred_lines, line_masks_gt, line_dc)

    # One paragraph entity per layout cluster: union of member line-level
    # paragraph masks.
    n_clusters = max(result.layout) + 1 if result.layout else 0
    para_entities = []
    for cid in range(n_clusters):
        acc = np.zeros((result.input_size, result.input_size), dtype=bool)
        for line_idx, lab in enumerate(result.layout):
            if lab == cid:
                acc |= result.paragraphs[line_idx]
        para_entities.append(acc)
    para_report = panoptic_eval(para_entities, para_masks_gt)

    layout_report = layout_eval(
        pred_words,
        result.word_groups_by_cluster(),
        word_masks_gt,
        tree.word_paragraph_groups(),
    )
    return {
        "word": word_report,
        "line": line_report,
        "paragraph": para_report,
        "layout": layout_report,
        "line_scored": [
            (ln.mask, ln.decayed_score) for ln in result.lines
        ],
        "line_gt": line_masks_gt,
    }


def evaluate_dataset(
    model: TextHierNet,
    trees: list[AnnotationTree],
    cfg: AmgConfig | None = None,
    results: list[AmgResult] | None = None,
) -> dict:
    """Run AMG (unless results are supplied) and aggregate every metric."""
    cfg = cfg or AmgConfig()
    pixel = PixelTally()
    word = InstanceEvalReport(0, 0, 0)
    line = InstanceEvalReport(0, 0, 0)
    para = InstanceEvalReport(0, 0, 0)
    layout = InstanceEvalReport(0, 0, 0)
    ap_preds, ap_gts = [], []

    for idx, tree in enumerate(trees):
        if results is not None:
            result = results[idx]
        else:
            result = amg(model, tree.image, cfg)
        if tree.pixel_text is not None:
            pixel.add(result.pixel_text, tree.pixel_text)
        reports = evaluate_amg_result(result, tree)
        word = word.merge(reports["word"])
        line = line.merge(reports["line"])
        para = para.merge(reports["paragraph"])
        layout = layout.merge(reports["layout"])
        ap_preds.append(reports["line_scored"])
        ap_gts.append(reports["line_gt"])

    return {
        "pixel": {"fg_iou": pixel.fg_iou, "fg_fscore": pixel.fg_fscore},
        "word": word.as_dict(),
        "line": line.as_dict(),
        "paragraph": para.as_dict(),
        "layout": layout.as_dict(),
        "line_ap": ap_eval(ap_preds, ap_gts),
    }
