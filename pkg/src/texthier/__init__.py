"""texthier: hierarchical text segmentation.

One promptable model covering four granularities of text structure: pixel
text, word instances, text lines, and paragraph layout. Includes automatic
mask generation, single-click promptable segmentation, training and
evaluation pipelines, a synthetic dataset generator, a CLI, and an HTTP
annotation service.
"""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    TextHierError,
    TrainingAborted,
    ValidationError,
)
from .profiles import PROFILES, EncoderConfig, ScaleProfile, get_profile

__all__ = [
    "CheckpointError",
    "ConfigurationError",
    "DataError",
    "EncoderConfig",
    "PROFILES",
    "ScaleProfile",
    "TextHierError",
    "TrainingAborted",
    "ValidationError",
    "get_profile",
    "__version__",
]
