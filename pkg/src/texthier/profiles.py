"""Scale profiles tying every feature-map shape in the model together.

A profile fixes the input resolution and the channel/spatial sizes of each
stage. All downstream shapes (embedding grid, low-res mask logits, high-res
mask logits, word-kernel logits) are pure functions of the profile, so a
single object can be validated once and trusted everywhere.

Two profiles ship by default:

* ``full``: 1024 px input, 64x64x256 embedding. The configuration used for
  real datasets on GPU hardware.
* ``desk``: 256 px input, 16x16x64 embedding. Every spatial/channel ratio of
  the full profile is preserved, but the model is small enough to train on a
  CPU in minutes. Tests and the synthetic overfit harness run on this one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigurationError

# Ratios shared by both profiles. The low-res mask grid is 4x the embedding
# grid, the high-res grid is 4x the low-res grid (= input resolution), and the
# word-kernel grid sits at 1.5x the low-res grid.
LR_TO_EMBED = 4
HR_TO_LR = 4
WORD_HR_NUM, WORD_HR_DEN = 3, 2


@dataclass(frozen=True)
class EncoderConfig:
    """Vision-transformer backbone hyperparameters.

    The backbone weights are frozen; only the per-block adapters train. The
    adapter bottleneck width is ``width // 4``.
    """

    width: int
    depth: int
    heads: int
    mlp_ratio: int = 4

    def __post_init__(self) -> None:
        if self.width % self.heads != 0:
            raise ConfigurationError(
                f"encoder width {self.width} not divisible by heads {self.heads}"
            )
        if self.width % 4 != 0:
            raise ConfigurationError("encoder width must be divisible by 4")

    @property
    def adapter_bottleneck(self) -> int:
        return self.width // 4


@dataclass(frozen=True)
class ScaleProfile:
    """All resolution and channel decisions for one model scale."""

    name: str
    input_size: int
    patch_size: int
    embed_dim: int
    lr_mask_dim: int
    hr_mask_dim: int
    prompt_token_count: int = 12
    # Token layout of both mask decoders: one score token plus four mask
    # tokens. The pixel-text decoder reads mask slot 0; the hierarchy decoder
    # reads the last three slots (word, line, paragraph).
    n_out: int = 5
    # Tokens produced per prompt point: the point token plus one padding token.
    n_p: int = 2
    encoder: EncoderConfig = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.encoder is None:
            raise ConfigurationError("ScaleProfile requires an encoder config")
        if self.input_size % self.patch_size != 0:
            raise ConfigurationError(
                f"input size {self.input_size} not divisible by patch {self.patch_size}"
            )
        if self.embed_hw * LR_TO_EMBED * HR_TO_LR != self.input_size:
            raise ConfigurationError(
                "profile ratios broken: input must equal 16x the embedding grid"
            )
        if (self.lr_mask_size * WORD_HR_NUM) % WORD_HR_DEN != 0:
            raise ConfigurationError("word grid must be integral (lr size * 1.5)")
        if self.embed_dim % 8 != 0:
            raise ConfigurationError("embed_dim must be divisible by 8")

    @property
    def embed_hw(self) -> int:
        """Side length of the square embedding grid."""
        return self.input_size // self.patch_size

    @property
    def lr_mask_size(self) -> int:
        return self.embed_hw * LR_TO_EMBED

    @property
    def hr_mask_size(self) -> int:
        return self.lr_mask_size * HR_TO_LR

    @property
    def word_hr_size(self) -> int:
        return self.lr_mask_size * WORD_HR_NUM // WORD_HR_DEN

    def shape_lattice(self) -> dict:
        """Every derived shape, for manifest dumps and shape assertions."""
        return {
            "input": (self.input_size, self.input_size, 3),
            "embedding": (self.embed_hw, self.embed_hw, self.embed_dim),
            "lr_mask": (self.lr_mask_size, self.lr_mask_size),
            "lr_features": (self.lr_mask_size, self.lr_mask_size, self.lr_mask_dim),
            "hr_mask": (self.hr_mask_size, self.hr_mask_size),
            "hr_features": (self.hr_mask_size, self.hr_mask_size, self.hr_mask_dim),
            "word_hr_mask": (self.word_hr_size, self.word_hr_size),
            "prompt_tokens": (self.prompt_token_count, self.embed_dim),
            "point_tokens": (self.n_p, self.embed_dim),
            "output_tokens": (self.n_out, self.embed_dim),
        }


# Backbone size table. ``full`` pairs with "base" by default; the larger
# entries exist so flop/parameter accounting can be done at the sizes used by
# published checkpoints without instantiating them in tests.
ENCODER_CONFIGS = {
    "desk": EncoderConfig(width=128, depth=3, heads=4),
    "base": EncoderConfig(width=768, depth=12, heads=12),
    "large": EncoderConfig(width=1024, depth=24, heads=16),
    "huge": EncoderConfig(width=1280, depth=32, heads=16),
}

PROFILES = {
    "desk": ScaleProfile(
        name="desk",
        input_size=256,
        patch_size=16,
        embed_dim=64,
        lr_mask_dim=8,
        hr_mask_dim=4,
        encoder=ENCODER_CONFIGS["desk"],
    ),
    "full": ScaleProfile(
        name="full",
        input_size=1024,
        patch_size=16,
        embed_dim=256,
        lr_mask_dim=32,
        hr_mask_dim=16,
        encoder=ENCODER_CONFIGS["base"],
    ),
}


def get_profile(name: str, encoder: str | None = None) -> ScaleProfile:
    """Look up a profile by name, optionally swapping the backbone size."""
    if name not in PROFILES:
        raise ConfigurationError(
            f"unknown profile {name!r}; available: {sorted(PROFILES)}"
        )
    prof = PROFILES[name]
    if encoder is not None:
        if encoder not in ENCODER_CONFIGS:
            raise ConfigurationError(
                f"unknown encoder {encoder!r}; available: {sorted(ENCODER_CONFIGS)}"
            )
        prof = ScaleProfile(
            name=prof.name,
            input_size=prof.input_size,
            patch_size=prof.patch_size,
            embed_dim=prof.embed_dim,
            lr_mask_dim=prof.lr_mask_dim,
            hr_mask_dim=prof.hr_mask_dim,
            prompt_token_count=prof.prompt_token_count,
            n_out=prof.n_out,
            n_p=prof.n_p,
            encoder=ENCODER_CONFIGS[encoder],
        )
    return prof
