"""Training configuration: one declarative object, file-loadable, with
dotted-key CLI overrides.

Defaults follow the reference recipe (AdamW, lr 1e-4, betas 0.9/0.999,
weight decay 0.05, tenfold lr drop late in training, 10 lines x 2 points
sampled per image) scaled to the desk profile's batch size and epoch count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigurationError


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    rotation_degrees: float = 15.0
    scale_min: float = 0.5
    scale_max: float = 2.0


@dataclass(frozen=True)
class TrainConfig:
    profile: str = "desk"
    seed: int = 0
    epochs: int = 200
    batch_size: int = 2
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.05
    lr_drop_epoch: int = 0  # 0 disables the tenfold drop
    lines_per_image: int = 10
    points_per_line: int = 2
    shrink_ratio: float = 0.4
    use_hr: bool = True
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only
    num_threads: int = 1
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def lr_at_epoch(self, epoch: int) -> float:
        if self.lr_drop_epoch and epoch >= self.lr_drop_epoch:
            return self.lr / 10.0
        return self.lr

    def as_dict(self) -> dict:
        return asdict(self)


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(value: str, target_type: type):
    if target_type is bool:
        low = value.lower()
        if low not in _BOOL_WORDS:
            raise ConfigurationError(f"expected a boolean, got {value!r}")
        return _BOOL_WORDS[low]
    try:
        return target_type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"cannot parse {value!r} as {target_type.__name__}") from exc


def _build(raw: dict) -> TrainConfig:
    raw = dict(raw)
    aug_raw = raw.pop("augment", {})
    known = {f.name for f in fields(TrainConfig)} - {"augment"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    aug_known = {f.name for f in fields(AugmentConfig)}
    aug_unknown = set(aug_raw) - aug_known
    if aug_unknown:
        raise ConfigurationError(f"unknown augment keys: {sorted(aug_unknown)}")
    try:
        return TrainConfig(augment=AugmentConfig(**aug_raw), **raw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path: str | Path | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {p} must hold a JSON object")
    return _build(raw)


def apply_overrides(cfg: TrainConfig, overrides: list[str]) -> TrainConfig:
    """Apply ``key=value`` strings; ``augment.key=value`` reaches the nested
    block. Unknown keys or unparsable values raise ConfigurationError."""
    aug = cfg.augment
    top: dict = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if key.startswith("augment."):
            sub = key[len("augment.") :]
            aug_fields = {f.name: f.type for f in fields(AugmentConfig)}
            if sub not in aug_fields:
                raise ConfigurationError(f"unknown augment key {sub!r}")
            current = getattr(aug, sub)
            aug = replace(aug, **{sub: _coerce(value, type(current))})
        else:
            cfg_fields = {f.name for f in fields(TrainConfig)} - {"augment"}
            if key not in cfg_fields:
                raise ConfigurationError(f"unknown config key {key!r}")
            current = getattr(cfg, key)
            top[key] = _coerce(value, type(current))
    return replace(cfg, augment=aug, **top)
