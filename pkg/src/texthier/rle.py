"""Run-length codec for binary masks.

Wire format: ``{"size": [height, width], "counts": "<ints>"}`` where counts
are space-separated run lengths over the row-major flattened mask, always
starting with the run of zeros (a leading ``0`` when the first pixel is set).
The decoder is bit-exact: ``decode(encode(m)) == m`` for every binary mask,
including all-zero and all-one masks. The browser workbench implements the
same codec; shared test vectors pin the format.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def encode(mask: np.ndarray) -> dict:
    """Encode a 2D binary mask. Accepts bool or {0,1} integer arrays."""
    if mask.ndim != 2:
        raise ValidationError(f"mask must be 2D, got shape {mask.shape}")
    flat = np.asarray(mask).reshape(-1).astype(bool)
    counts: list[int] = []
    if flat.size == 0:
        return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": ""}
    # Run boundaries via the change points of the flattened sequence.
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        counts.append(0)
    counts.extend(int(r) for r in runs)
    return {
        "size": [int(mask.shape[0]), int(mask.shape[1])],
        "counts": " ".join(str(c) for c in counts),
    }


def decode(rle: dict) -> np.ndarray:
    """Decode back to a bool array of shape ``size``."""
    try:
        h, w = int(rle["size"][0]), int(rle["size"][1])
        counts_str = rle["counts"]
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed RLE payload: {exc}") from exc
    counts = [int(tok) for tok in counts_str.split()] if counts_str else []
    total = sum(counts)
    if total != h * w:
        raise ValidationError(
            f"RLE counts sum to {total}, expected {h * w} for size {h}x{w}"
        )
    if any(c < 0 for c in counts):
        raise ValidationError("RLE counts must be non-negative")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(h, w)
