"""Dataset directory I/O.

Layout on disk:

    dataset/
      annotations.json      hierarchy annotations for every image
      manifest.json         format version + split membership
      images/<id>.png       RGB pages
      pixel_masks/<id>.png  optional 8-bit masks (0 background, 255 text)

``annotations.json`` holds ``{"annotations": [...]}`` entries in the common
hierarchical OCR schema (see ``schema.tree_from_dict``). When an image has a
pixel-text layer, its entry carries ``"pixel_text": {"mask_file", "status"}``.
Round trip is lossless: export followed by load reproduces identical
polygons, flags, masks, and review statuses.
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from ..errors import DataError
from .schema import PIXEL_TEXT_ABSENT, AnnotationTree, tree_from_dict, tree_to_dict

FORMAT_VERSION = 1
ANNOTATIONS_FILE = "annotations.json"
MANIFEST_FILE = "manifest.json"
IMAGES_DIR = "images"
MASKS_DIR = "pixel_masks"


def export_dataset(
    trees: list[AnnotationTree],
    out_dir: str | Path,
    splits: dict[str, list[str]] | None = None,
) -> Path:
    """Write a dataset directory; returns its path."""
    out = Path(out_dir)
    (out / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    (out / MASKS_DIR).mkdir(parents=True, exist_ok=True)

    entries = []
    for tree in trees:
        entry = tree_to_dict(tree)
        if tree.image is not None:
            ok = cv2.imwrite(
                str(out / IMAGES_DIR / f"{tree.image_id}.png"),
                cv2.cvtColor(tree.image, cv2.COLOR_RGB2BGR),
            )
            if not ok:
                raise DataError(f"failed to write image for {tree.image_id}")
        if tree.pixel_text is not None:
            mask_file = f"{tree.image_id}.png"
            cv2.imwrite(
                str(out / MASKS_DIR / mask_file),
                tree.pixel_text.astype(np.uint8) * 255,
            )
            entry["pixel_text"] = {
                "mask_file": mask_file,
                "status": tree.pixel_text_status,
            }
        entries.append(entry)

    (out / ANNOTATIONS_FILE).write_text(
        json.dumps({"annotations": entries}, indent=1)
    )
    manifest = {
        "format_version": FORMAT_VERSION,
        "splits": splits or {"train": [t.image_id for t in trees]},
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=1))
    return out


def load_dataset(
    data_dir: str | Path,
    split: str | None = None,
    load_images: bool = True,
) -> list[AnnotationTree]:
    """Load a dataset directory back into annotation trees.

    Missing pixel-text layers are tolerated (status stays "absent"); a
    missing image file is an error only when images were requested.
    """
    root = Path(data_dir)
    ann_path = root / ANNOTATIONS_FILE
    if not ann_path.is_file():
        raise DataError(f"no {ANNOTATIONS_FILE} under {root}")
    try:
        payload = json.loads(ann_path.read_text())
        entries = payload["annotations"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed {ann_path}: {exc}") from exc

    wanted: set[str] | None = None
    if split is not None:
        manifest_path = root / MANIFEST_FILE
        if not manifest_path.is_file():
            raise DataError(f"split {split!r} requested but no {MANIFEST_FILE}")
        manifest = json.loads(manifest_path.read_text())
        try:
            wanted = set(manifest["splits"][split])
        except KeyError as exc:
            raise DataError(f"unknown split {split!r} in {manifest_path}") from exc

    trees = []
    for entry in entries:
        tree = tree_from_dict(entry)
        if wanted is not None and tree.image_id not in wanted:
            continue
        if load_images:
            img_path = root / IMAGES_DIR / f"{tree.image_id}.png"
            if not img_path.is_file():
                raise DataError(f"missing image file {img_path}")
            bgr = cv2.imread(str(img_path), cv2.IMREAD_COLOR)
            if bgr is None:
                raise DataError(f"unreadable image file {img_path}")
            tree.image = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
            if bgr.shape[0] != tree.height or bgr.shape[1] != tree.width:
                raise DataError(
                    f"{tree.image_id}: image is {bgr.shape[1]}x{bgr.shape[0]}, "
                    f"annotation says {tree.width}x{tree.height}"
                )
        px = entry.get("pixel_text")
        if px is not None:
            mask_path = root / MASKS_DIR / px["mask_file"]
            if not mask_path.is_file():
                raise DataError(f"missing pixel mask {mask_path}")
            raw = cv2.imread(str(mask_path), cv2.IMREAD_GRAYSCALE)
            if raw is None:
                raise DataError(f"unreadable pixel mask {mask_path}")
            tree.pixel_text = raw > 127
            status = px.get("status", PIXEL_TEXT_ABSENT)
            tree.pixel_text_status = status
            # Re-run the dataclass checks now that the mask is attached.
            AnnotationTree.__post_init__(tree)
        trees.append(tree)
    return trees
