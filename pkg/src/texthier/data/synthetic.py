"""Synthetic page generator with exact pixel-level ground truth.

Glyphs are drawn from a built-in 5x7 cell font rendered as filled square
blocks, so the union of painted cells IS the pixel-text mask; no font files
or anti-aliasing are involved. Words, lines, and paragraphs are laid out on
a configurable grid with generous gaps, producing a dataset whose hierarchy
annotations are exact by construction:

* word polygon  == bounding box of the word's painted cells
* line polygon  == bounding box of its words (including inter-word gaps)
* paragraph polygon == padded bounding box of its lines

Every tree satisfies word-in-line-in-paragraph containment, and the painted
pixels always lie inside word polygons. Generation is deterministic per
(seed, image index).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import DataError
from .schema import (
    PIXEL_TEXT_REVIEWED,
    AnnotationTree,
    LineAnn,
    ParagraphAnn,
    WordAnn,
)

# 5 columns x 7 rows per glyph. Every glyph touches all four edges of its
# cell box, so word bounding boxes are exact on the cell grid.
GLYPHS = {
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".####", "#....", "#....", "#....", "#....", "#....", ".####"),
    "D": ("####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "N": ("#...#", "##..#", "##..#", "#.#.#", "#..##", "#..##", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
    "U": ("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "X": ("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),
    "Y": ("#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."),
    "Z": ("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),
}
GLYPH_COLS = 5
GLYPH_ROWS = 7
ALPHABET = sorted(GLYPHS)


@dataclass(frozen=True)
class SynthConfig:
    """Layout knobs, all in font cells unless stated otherwise."""

    image_size: int = 256
    glyph_scale: tuple[int, int] = (4, 4)  # px per font cell, inclusive range
    glyphs_per_word: tuple[int, int] = (2, 4)
    words_per_line: tuple[int, int] = (1, 3)
    lines_per_paragraph: tuple[int, int] = (1, 3)
    paragraphs_per_image: tuple[int, int] = (1, 2)
    word_gap_cells: int = 2
    line_gap_cells: int = 2
    paragraph_pad_cells: int = 1
    min_paragraph_gap: int = 16  # px between paragraph rectangles
    margin: int = 8  # px, image border keep-out
    snap: int = 4  # px grid that glyph origins land on (0 = off)
    background_range: tuple[int, int] = (235, 255)
    foreground_range: tuple[int, int] = (10, 60)
    noise_std: float = 0.0
    illegible_prob: float = 0.0


def _rand_int(rng: np.random.Generator, lo_hi: tuple[int, int]) -> int:
    lo, hi = lo_hi
    if lo > hi:
        raise DataError(f"bad range {lo_hi}")
    return int(rng.integers(lo, hi + 1))


def _snap(value: int, grid: int) -> int:
    return (value // grid) * grid if grid > 1 else value


def _word_width_px(n_glyphs: int, scale: int) -> int:
    return scale * (GLYPH_COLS * n_glyphs + (n_glyphs - 1))


def _bbox_poly(x0: int, y0: int, w: int, h: int) -> np.ndarray:
    x1, y1 = x0 + w - 1, y0 + h - 1
    return np.array(
        [[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float32
    )


def _paint_glyph(
    image: np.ndarray,
    pixel_text: np.ndarray,
    ch: str,
    x0: int,
    y0: int,
    scale: int,
    color: np.ndarray,
) -> None:
    rows = GLYPHS[ch]
    for r in range(GLYPH_ROWS):
        for c in range(GLYPH_COLS):
            if rows[r][c] != "#":
                continue
            ys, xs = y0 + r * scale, x0 + c * scale
            image[ys : ys + scale, xs : xs + scale] = color
            pixel_text[ys : ys + scale, xs : xs + scale] = True


def _compose_paragraph(cfg: SynthConfig, rng: np.random.Generator, scale: int):
    """Pick paragraph content and compute its pixel footprint."""
    n_lines = _rand_int(rng, cfg.lines_per_paragraph)
    lines = []
    for _ in range(n_lines):
        n_words = _rand_int(rng, cfg.words_per_line)
        words = [
            "".join(rng.choice(ALPHABET, size=_rand_int(rng, cfg.glyphs_per_word)))
            for _ in range(n_words)
        ]
        lines.append(words)
    line_h = GLYPH_ROWS * scale
    line_gap = cfg.line_gap_cells * scale
    word_gap = cfg.word_gap_cells * scale
    widths = [
        sum(_word_width_px(len(w), scale) for w in words)
        + word_gap * (len(words) - 1)
        for words in lines
    ]
    block_w = max(widths)
    block_h = n_lines * line_h + (n_lines - 1) * line_gap
    return lines, widths, block_w, block_h


def generate_one(
    cfg: SynthConfig, rng: np.random.Generator, image_id: str
) -> AnnotationTree:
    size = cfg.image_size
    image = np.empty((size, size, 3), dtype=np.uint8)
    bg = int(rng.integers(cfg.background_range[0], cfg.background_range[1] + 1))
    image[:] = bg
    pixel_text = np.zeros((size, size), dtype=bool)

    scale = _rand_int(rng, cfg.glyph_scale)
    n_paras = _rand_int(rng, cfg.paragraphs_per_image)
    pad = cfg.paragraph_pad_cells * scale
    placed_rects: list[tuple[int, int, int, int]] = []
    paragraphs: list[ParagraphAnn] = []

    for _ in range(n_paras):
        placed = False
        # Retry with fresh (possibly smaller) content when placement fails.
        for _regen in range(6):
            lines, widths, block_w, block_h = _compose_paragraph(cfg, rng, scale)
            span_w = size - 2 * cfg.margin - block_w
            span_h = size - 2 * cfg.margin - block_h
            if span_w < 0 or span_h < 0:
                continue
            for _try in range(60):
                x0 = cfg.margin + _snap(int(rng.integers(0, span_w + 1)), cfg.snap)
                y0 = cfg.margin + _snap(int(rng.integers(0, span_h + 1)), cfg.snap)
                gap = cfg.min_paragraph_gap
                rect = (x0 - gap, y0 - gap, x0 + block_w + gap, y0 + block_h + gap)
                clash = any(
                    not (
                        rect[2] <= r[0] + 0
                        or r[2] <= rect[0]
                        or rect[3] <= r[1]
                        or r[3] <= rect[1]
                    )
                    for r in placed_rects
                )
                if not clash:
                    placed = True
                    break
            if placed:
                break
        if not placed:
            if paragraphs:
                break
            raise DataError(
                f"{image_id}: could not place any paragraph at size {size}"
            )
        placed_rects.append((x0, y0, x0 + block_w, y0 + block_h))

        line_h = GLYPH_ROWS * scale
        line_gap = cfg.line_gap_cells * scale
        word_gap = cfg.word_gap_cells * scale
        line_anns: list[LineAnn] = []
        for li, words in enumerate(lines):
            ly = y0 + li * (line_h + line_gap)
            lx = x0
            word_anns: list[WordAnn] = []
            for word in words:
                w_px = _word_width_px(len(word), scale)
                color = np.array(
                    [
                        rng.integers(cfg.foreground_range[0], cfg.foreground_range[1] + 1)
                        for _ in range(3)
                    ],
                    dtype=np.uint8,
                )
                gx = lx
                for ch in word:
                    _paint_glyph(image, pixel_text, ch, gx, ly, scale, color)
                    gx += (GLYPH_COLS + 1) * scale
                legible = bool(rng.random() >= cfg.illegible_prob)
                word_anns.append(
                    WordAnn(
                        vertices=_bbox_poly(lx, ly, w_px, line_h),
                        legible=legible,
                        text=word,
                    )
                )
                lx += w_px + word_gap
            line_w = widths[li]
            line_anns.append(
                LineAnn(
                    vertices=_bbox_poly(x0, ly, line_w, line_h),
                    words=word_anns,
                    legible=all(w.legible for w in word_anns),
                    text=" ".join(words),
                )
            )
        px0, py0 = max(x0 - pad, 0), max(y0 - pad, 0)
        px1 = min(x0 + block_w - 1 + pad, size - 1)
        py1 = min(y0 + block_h - 1 + pad, size - 1)
        paragraphs.append(
            ParagraphAnn(
                vertices=_bbox_poly(px0, py0, px1 - px0 + 1, py1 - py0 + 1),
                lines=line_anns,
            )
        )

    if cfg.noise_std > 0:
        noise = rng.normal(0.0, cfg.noise_std, image.shape)
        image = np.clip(image.astype(np.float64) + noise, 0, 255).astype(np.uint8)

    return AnnotationTree(
        image_id=image_id,
        width=size,
        height=size,
        paragraphs=paragraphs,
        image=image,
        pixel_text=pixel_text,
        pixel_text_status=PIXEL_TEXT_REVIEWED,
    )


def generate_synthetic(
    cfg: SynthConfig, count: int, seed: int = 0
) -> list[AnnotationTree]:
    """Generate ``count`` pages. Page i depends only on (seed, i)."""
    trees = []
    for i in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
        trees.append(generate_one(cfg, rng, image_id=f"synth_{seed:04d}_{i:04d}"))
    return trees


def two_paragraph_config(cfg: SynthConfig | None = None) -> SynthConfig:
    """A config variant that always produces exactly two paragraphs."""
    base = cfg or SynthConfig()
    return replace(base, paragraphs_per_image=(2, 2))
