from .checkpoint import load_checkpoint, read_manifest, save_checkpoint
from .encoder import AdapterBranch, ImageEncoder, adapter_forward
from .hierarchy_decoder import HierarchyDecoder
from .network import (
    HierPrediction,
    ImageEmbedding,
    PixelTextOutput,
    TextHierNet,
    build_model,
)
from .pixel_text_decoder import PixelTextDecoder, binarize
from .prompt_encoder import PromptEncoder
from .self_prompting import SelfPromptingModule, tokenize

__all__ = [
    "AdapterBranch",
    "HierarchyDecoder",
    "HierPrediction",
    "ImageEmbedding",
    "ImageEncoder",
    "PixelTextDecoder",
    "PixelTextOutput",
    "PromptEncoder",
    "SelfPromptingModule",
    "TextHierNet",
    "adapter_forward",
    "binarize",
    "build_model",
    "load_checkpoint",
    "read_manifest",
    "save_checkpoint",
    "tokenize",
]
