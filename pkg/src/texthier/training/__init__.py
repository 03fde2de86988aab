from .augment import AugmentParams, apply_augmentation, augment, sample_params
from .config import AugmentConfig, TrainConfig, apply_overrides, load_config
from .loop import fit, make_optimizer, prepare_batch, train_step
from .sampling import PromptSample, sample_training_prompts, word_kernel_union

__all__ = [
    "AugmentConfig",
    "AugmentParams",
    "PromptSample",
    "TrainConfig",
    "apply_augmentation",
    "apply_overrides",
    "augment",
    "fit",
    "load_config",
    "make_optimizer",
    "prepare_batch",
    "sample_params",
    "sample_training_prompts",
    "train_step",
    "word_kernel_union",
]
