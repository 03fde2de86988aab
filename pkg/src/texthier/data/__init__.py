from .autolabel import autolabel_pixel_text, mark_reviewed
from .hiertext import export_dataset, load_dataset
from .schema import (
    PIXEL_TEXT_ABSENT,
    PIXEL_TEXT_REVIEWED,
    PIXEL_TEXT_UNREVIEWED,
    AnnotationTree,
    LineAnn,
    ParagraphAnn,
    WordAnn,
    tree_from_dict,
    tree_to_dict,
)
from .synthetic import (
    ALPHABET,
    GLYPHS,
    SynthConfig,
    generate_one,
    generate_synthetic,
    two_paragraph_config,
)

__all__ = [
    "ALPHABET",
    "AnnotationTree",
    "GLYPHS",
    "LineAnn",
    "ParagraphAnn",
    "PIXEL_TEXT_ABSENT",
    "PIXEL_TEXT_REVIEWED",
    "PIXEL_TEXT_UNREVIEWED",
    "SynthConfig",
    "WordAnn",
    "autolabel_pixel_text",
    "export_dataset",
    "generate_one",
    "generate_synthetic",
    "load_dataset",
    "mark_reviewed",
    "tree_from_dict",
    "tree_to_dict",
    "two_paragraph_config",
]
