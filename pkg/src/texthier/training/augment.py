"""Training-time augmentation applied consistently to image, pixel mask,
and every polygon in the annotation tree.

Geometry is one affine map (rotation about the image center, uniform scale,
translation drawn from the large-scale-jitter feasible region); the image
warps bilinearly, the pixel mask warps nearest-neighbor, and polygons are
transformed exactly through the same matrix, so raster/polygon consistency
survives augmentation. Color jitter (brightness, contrast, saturation)
touches only the image. Identity parameters return the sample unchanged,
bit for bit.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import cv2
import numpy as np

from ..data.schema import AnnotationTree
from .config import AugmentConfig


@dataclass(frozen=True)
class AugmentParams:
    angle_deg: float = 0.0
    scale: float = 1.0
    shift_x: float = 0.0
    shift_y: float = 0.0
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0

    def is_identity(self) -> bool:
        return (
            self.angle_deg == 0.0
            and self.scale == 1.0
            and self.shift_x == 0.0
            and self.shift_y == 0.0
            and self.brightness == 1.0
            and self.contrast == 1.0
            and self.saturation == 1.0
        )


def sample_params(cfg: AugmentConfig, rng: np.random.Generator, size: int) -> AugmentParams:
    if not cfg.enabled:
        return AugmentParams()
    scale = float(rng.uniform(cfg.scale_min, cfg.scale_max))
    angle = float(rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees))
    # Large-scale jitter: scaled content either gets cropped (scale > 1) or
    # floats inside the canvas (scale < 1); pick the offset uniformly.
    span = abs(scale - 1.0) * size
    lo, hi = (-span, 0.0) if scale > 1.0 else (0.0, span)
    shift_x = float(rng.uniform(lo, hi))
    shift_y = float(rng.uniform(lo, hi))
    return AugmentParams(
        angle_deg=angle,
        scale=scale,
        shift_x=shift_x,
        shift_y=shift_y,
        brightness=float(rng.uniform(1 - cfg.brightness, 1 + cfg.brightness)),
        contrast=float(rng.uniform(1 - cfg.contrast, 1 + cfg.contrast)),
        saturation=float(rng.uniform(1 - cfg.saturation, 1 + cfg.saturation)),
    )


def affine_matrix(params: AugmentParams, size: int) -> np.ndarray:
    """2x3 forward map: rotate+scale about the center, then translate."""
    center = ((size - 1) / 2.0, (size - 1) / 2.0)
    m = cv2.getRotationMatrix2D(center, params.angle_deg, params.scale)
    m[0, 2] += params.shift_x
    m[1, 2] += params.shift_y
    return m


def transform_points(points: np.ndarray, m: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    out = pts @ m[:, :2].T + m[:, 2]
    return out.astype(np.float32)


def _color_jitter(image: np.ndarray, params: AugmentParams) -> np.ndarray:
    x = image.astype(np.float32)
    x = x * params.brightness
    mean = x.mean()
    x = (x - mean) * params.contrast + mean
    gray = x.mean(axis=2, keepdims=True)
    x = gray + (x - gray) * params.saturation
    return np.clip(x, 0, 255).astype(np.uint8)


def apply_augmentation(tree: AnnotationTree, params: AugmentParams) -> AnnotationTree:
    """Return an augmented copy; identity parameters return the input as-is."""
    if params.is_identity():
        return tree
    size = tree.width
    m = affine_matrix(params, size)
    out = copy.deepcopy(tree)

    if out.image is not None:
        img = _color_jitter(out.image, params)
        out.image = cv2.warpAffine(
            img,
            m,
            (tree.width, tree.height),
            flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_REPLICATE,
        )
    if out.pixel_text is not None:
        warped = cv2.warpAffine(
            out.pixel_text.astype(np.uint8),
            m,
            (tree.width, tree.height),
            flags=cv2.INTER_NEAREST,
            borderMode=cv2.BORDER_CONSTANT,
            borderValue=0,
        )
        out.pixel_text = warped.astype(bool)

    for para in out.paragraphs:
        para.vertices = transform_points(para.vertices, m)
        for line in para.lines:
            line.vertices = transform_points(line.vertices, m)
            for word in line.words:
                word.vertices = transform_points(word.vertices, m)
    return out


def augment(
    tree: AnnotationTree, cfg: AugmentConfig, rng: np.random.Generator
) -> AnnotationTree:
    return apply_augmentation(tree, sample_params(cfg, rng, tree.width))
