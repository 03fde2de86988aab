"""Annotation model: word -> line -> paragraph trees plus a pixel-text layer.

The JSON wire format mirrors the common hierarchical OCR layout schema
(paragraphs containing lines containing words, each with a polygon and a
legibility flag). The pixel-text layer is optional; when produced by the
auto-labeling workflow it carries a review status so downstream consumers
can distinguish draft masks from human-verified ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, ValidationError
from ..geometry import rasterize_polygon

PIXEL_TEXT_ABSENT = "absent"
PIXEL_TEXT_UNREVIEWED = "unreviewed"
PIXEL_TEXT_REVIEWED = "reviewed"
_STATUSES = (PIXEL_TEXT_ABSENT, PIXEL_TEXT_UNREVIEWED, PIXEL_TEXT_REVIEWED)


def _vertices(raw, where: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] < 3 or arr.shape[1] != 2:
        raise DataError(f"{where}: vertices must be [N>=3, 2], got {arr.shape}")
    return arr


@dataclass
class WordAnn:
    vertices: np.ndarray
    legible: bool = True
    text: str = ""

    def mask(self, height: int, width: int) -> np.ndarray:
        return rasterize_polygon(self.vertices, height, width)


@dataclass
class LineAnn:
    vertices: np.ndarray
    words: list[WordAnn] = field(default_factory=list)
    legible: bool = True
    text: str = ""

    def mask(self, height: int, width: int) -> np.ndarray:
        return rasterize_polygon(self.vertices, height, width)


@dataclass
class ParagraphAnn:
    vertices: np.ndarray
    lines: list[LineAnn] = field(default_factory=list)
    legible: bool = True

    def mask(self, height: int, width: int) -> np.ndarray:
        return rasterize_polygon(self.vertices, height, width)


@dataclass
class AnnotationTree:
    """Everything known about one image."""

    image_id: str
    width: int
    height: int
    paragraphs: list[ParagraphAnn] = field(default_factory=list)
    image: np.ndarray | None = None  # [H, W, 3] uint8 RGB
    pixel_text: np.ndarray | None = None  # [H, W] bool
    pixel_text_status: str = PIXEL_TEXT_ABSENT

    def __post_init__(self) -> None:
        if self.pixel_text_status not in _STATUSES:
            raise DataError(f"bad pixel_text_status {self.pixel_text_status!r}")
        if self.pixel_text is None and self.pixel_text_status != PIXEL_TEXT_ABSENT:
            raise DataError("pixel_text_status set but no mask present")

    # Flattened views. Order is document order, stable across round trips.
    def iter_lines(self):
        for p_idx, para in enumerate(self.paragraphs):
            for line in para.lines:
                yield p_idx, line

    def iter_words(self):
        for p_idx, para in enumerate(self.paragraphs):
            for l_idx, line in enumerate(para.lines):
                for word in line.words:
                    yield p_idx, l_idx, word

    def word_masks(self) -> list[np.ndarray]:
        return [w.mask(self.height, self.width) for _, _, w in self.iter_words()]

    def line_masks(self) -> list[np.ndarray]:
        return [ln.mask(self.height, self.width) for _, ln in self.iter_lines()]

    def paragraph_masks(self) -> list[np.ndarray]:
        return [p.mask(self.height, self.width) for p in self.paragraphs]

    def word_paragraph_groups(self) -> list[list[int]]:
        """Word indices grouped by owning paragraph (layout ground truth)."""
        groups: list[list[int]] = [[] for _ in self.paragraphs]
        for idx, (p_idx, _, _) in enumerate(self.iter_words()):
            groups[p_idx].append(idx)
        return groups

    def validate_containment(self, tolerance: float = 2.0) -> None:
        """Check word-in-line and line-in-paragraph nesting within tolerance.

        Containment is measured on rasters: a child may stick out by at most
        ``tolerance`` px worth of dilation of the parent polygon.
        """
        import cv2

        kernel_size = int(2 * tolerance + 1)
        kernel = np.ones((kernel_size, kernel_size), np.uint8)

        def grown(poly: np.ndarray) -> np.ndarray:
            m = rasterize_polygon(poly, self.height, self.width).astype(np.uint8)
            return cv2.dilate(m, kernel).astype(bool)

        for p_idx, para in enumerate(self.paragraphs):
            para_grown = grown(para.vertices)
            for l_idx, line in enumerate(para.lines):
                line_m = line.mask(self.height, self.width)
                if (line_m & ~para_grown).any():
                    raise ValidationError(
                        f"{self.image_id}: line {p_idx}.{l_idx} escapes its paragraph"
                    )
                line_grown = grown(line.vertices)
                for w_idx, word in enumerate(line.words):
                    word_m = word.mask(self.height, self.width)
                    if (word_m & ~line_grown).any():
                        raise ValidationError(
                            f"{self.image_id}: word {p_idx}.{l_idx}.{w_idx} "
                            "escapes its line"
                        )


def tree_to_dict(tree: AnnotationTree) -> dict:
    """Serialize the annotation hierarchy (not the pixel arrays)."""

    def verts(v: np.ndarray) -> list:
        return [[float(x), float(y)] for x, y in np.asarray(v)]

    return {
        "image_id": tree.image_id,
        "image_width": tree.width,
        "image_height": tree.height,
        "paragraphs": [
            {
                "vertices": verts(p.vertices),
                "legible": bool(p.legible),
                "lines": [
                    {
                        "vertices": verts(ln.vertices),
                        "legible": bool(ln.legible),
                        "text": ln.text,
                        "words": [
                            {
                                "vertices": verts(w.vertices),
                                "legible": bool(w.legible),
                                "text": w.text,
                            }
                            for w in ln.words
                        ],
                    }
                    for ln in p.lines
                ],
            }
            for p in tree.paragraphs
        ],
    }


def tree_from_dict(raw: dict) -> AnnotationTree:
    """Parse one annotation entry; raises DataError on schema violations."""
    try:
        image_id = str(raw["image_id"])
        width = int(raw["image_width"])
        height = int(raw["image_height"])
        paragraphs_raw = raw["paragraphs"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed annotation entry: {exc}") from exc
    if width <= 0 or height <= 0:
        raise DataError(f"{image_id}: non-positive image size {width}x{height}")

    paragraphs = []
    for p_idx, p in enumerate(paragraphs_raw):
        where = f"{image_id} paragraph {p_idx}"
        lines = []
        for l_idx, ln in enumerate(p.get("lines", [])):
            lwhere = f"{where} line {l_idx}"
            words = [
                WordAnn(
                    vertices=_vertices(w["vertices"], f"{lwhere} word {w_idx}"),
                    legible=bool(w.get("legible", True)),
                    text=str(w.get("text", "")),
                )
                for w_idx, w in enumerate(ln.get("words", []))
            ]
            lines.append(
                LineAnn(
                    vertices=_vertices(ln["vertices"], lwhere),
                    words=words,
                    legible=bool(ln.get("legible", True)),
                    text=str(ln.get("text", "")),
                )
            )
        paragraphs.append(
            ParagraphAnn(
                vertices=_vertices(p["vertices"], where),
                lines=lines,
                legible=bool(p.get("legible", True)),
            )
        )
    return AnnotationTree(
        image_id=image_id, width=width, height=height, paragraphs=paragraphs
    )
