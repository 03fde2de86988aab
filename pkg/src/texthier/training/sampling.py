"""Prompt sampling for hierarchy-decoder training.

Per image and epoch: up to ``lines_per_image`` text lines are drawn uniformly
without replacement; for each chosen line, ``points_per_line`` prompt points
are drawn uniformly from the intersection of the line mask with the
pixel-text foreground (points land on actual ink, never on gaps). Each point
becomes one PromptSample whose targets are:

* word: union of the shrunk kernels of every word on the prompted line
* line: the prompted line's mask
* paragraph: the owning paragraph's mask

Images with no eligible text produce exactly one blank sample: a background
point with all-empty targets, so textless pages still contribute a
well-defined (zero) hierarchy loss instead of being silently skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.schema import AnnotationTree
from ..geometry import rasterize_polygon, shrink_polygon

SHRINK_RATIO_DEFAULT = 0.4


@dataclass
class PromptSample:
    point: np.ndarray  # [2] float32, (x, y) pixel coords
    word_target: np.ndarray  # [H, W] bool
    line_target: np.ndarray  # [H, W] bool
    para_target: np.ndarray  # [H, W] bool
    blank: bool = False


def word_kernel_union(
    tree: AnnotationTree, para_idx: int, line_idx: int, shrink_ratio: float
) -> np.ndarray:
    """Union of shrunk word kernels on one line, at image resolution.

    Words whose shrink collapses contribute nothing (thin words have no
    kernel); the union may therefore be empty.
    """
    h, w = tree.height, tree.width
    acc = np.zeros((h, w), dtype=bool)
    for word in tree.paragraphs[para_idx].lines[line_idx].words:
        kernel = shrink_polygon(word.vertices, shrink_ratio)
        if kernel is not None:
            acc |= rasterize_polygon(kernel, h, w)
    return acc


def sample_training_prompts(
    tree: AnnotationTree,
    rng: np.random.Generator,
    lines_per_image: int = 10,
    points_per_line: int = 2,
    shrink_ratio: float = SHRINK_RATIO_DEFAULT,
) -> list[PromptSample]:
    h, w = tree.height, tree.width
    if tree.pixel_text is not None:
        foreground = tree.pixel_text
    else:
        # No pixel layer: fall back to word interiors as the ink proxy.
        foreground = np.zeros((h, w), dtype=bool)
        for m in tree.word_masks():
            foreground |= m

    candidates = []  # (para_idx, line_idx, ys, xs)
    for flat_idx, (para_idx, line) in enumerate(tree.iter_lines()):
        line_idx = _line_index_within(tree, flat_idx)
        mask = line.mask(h, w) & foreground
        ys, xs = np.nonzero(mask)
        if len(ys):
            candidates.append((para_idx, line_idx, ys, xs))

    if not candidates:
        point = np.array(
            [rng.integers(0, w), rng.integers(0, h)], dtype=np.float32
        )
        empty = np.zeros((h, w), dtype=bool)
        return [
            PromptSample(
                point=point,
                word_target=empty,
                line_target=empty.copy(),
                para_target=empty.copy(),
                blank=True,
            )
        ]

    n_lines = min(lines_per_image, len(candidates))
    chosen = rng.choice(len(candidates), size=n_lines, replace=False)

    samples: list[PromptSample] = []
    for ci in sorted(int(c) for c in chosen):
        para_idx, line_idx, ys, xs = candidates[ci]
        word_t = word_kernel_union(tree, para_idx, line_idx, shrink_ratio)
        line_t = tree.paragraphs[para_idx].lines[line_idx].mask(h, w)
        para_t = tree.paragraphs[para_idx].mask(h, w)
        replace = len(ys) < points_per_line
        picks = rng.choice(len(ys), size=points_per_line, replace=replace)
        for p in picks:
            point = np.array([xs[p], ys[p]], dtype=np.float32)
            samples.append(
                PromptSample(
                    point=point,
                    word_target=word_t,
                    line_target=line_t,
                    para_target=para_t,
                )
            )
    return samples


def _line_index_within(tree: AnnotationTree, flat_idx: int) -> int:
    """Map a flat line index back to its index inside the owning paragraph."""
    count = 0
    for para in tree.paragraphs:
        n = len(para.lines)
        if flat_idx < count + n:
            return flat_idx - count
        count += n
    raise IndexError(flat_idx)
