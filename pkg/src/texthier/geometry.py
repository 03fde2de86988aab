"""Polygon and mask geometry for word-kernel processing.

Words are supervised as shrunk kernels so adjacent instances stay separable;
at inference the predicted kernels are traced into components and expanded
back to full word extent. Both offsets use the area/perimeter rule:

* shrink distance  ``D = A * (1 - r^2) / L`` with shrink ratio ``r`` (0.4)
* expand distance  ``D = A * r / L``        with unclip ratio ``r`` (1.5)

With these defaults the round trip approximately recovers the original
polygon for convex, word-shaped inputs. Offsetting uses mitred joins so
rectangles stay rectangles.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from shapely.geometry import MultiPolygon, Point, Polygon

from .errors import ValidationError

SHRINK_RATIO = 0.4
UNCLIP_RATIO = 1.5
MIN_COMPONENT_AREA = 4.0
SIMPLIFY_TOLERANCE = 2.0
_MITRE_LIMIT = 10.0


@dataclass
class WordInstance:
    """One detected word: polygon in input-image pixels, raster, confidence."""

    polygon: np.ndarray  # [N, 2] float32, x/y order
    mask: np.ndarray  # [H, W] bool
    score: float


def _as_shapely(vertices: np.ndarray) -> Polygon:
    verts = np.asarray(vertices, dtype=np.float64)
    if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
        raise ValidationError(f"polygon needs >=3 xy vertices, got {verts.shape}")
    poly = Polygon(verts)
    if not poly.is_valid:
        poly = poly.buffer(0)
    if isinstance(poly, MultiPolygon):
        poly = max(poly.geoms, key=lambda g: g.area)
    return poly


def _largest_ring(geom) -> np.ndarray | None:
    if geom.is_empty:
        return None
    if isinstance(geom, MultiPolygon):
        geom = max(geom.geoms, key=lambda g: g.area)
    if geom.area <= 0:
        return None
    ring = np.asarray(geom.exterior.coords[:-1], dtype=np.float32)
    return ring if len(ring) >= 3 else None


def shrink_polygon(vertices: np.ndarray, ratio: float = SHRINK_RATIO) -> np.ndarray | None:
    """Inward offset by ``A * (1 - ratio^2) / L``.

    Returns None when the polygon collapses (thin inputs have no kernel).
    """
    poly = _as_shapely(vertices)
    if poly.length <= 0 or poly.area <= 0:
        return None
    dist = poly.area * (1.0 - ratio * ratio) / poly.length
    shrunk = poly.buffer(-dist, join_style=2, mitre_limit=_MITRE_LIMIT)
    return _largest_ring(shrunk)


def expand_polygon(vertices: np.ndarray, ratio: float = UNCLIP_RATIO) -> np.ndarray:
    """Outward offset by ``A * ratio / L``."""
    poly = _as_shapely(vertices)
    if poly.length <= 0:
        return np.asarray(vertices, dtype=np.float32)
    dist = poly.area * ratio / poly.length
    grown = poly.buffer(dist, join_style=2, mitre_limit=_MITRE_LIMIT)
    ring = _largest_ring(grown)
    if ring is None:
        return np.asarray(vertices, dtype=np.float32)
    return ring


def rasterize_polygon(vertices: np.ndarray, height: int, width: int) -> np.ndarray:
    """Fill a polygon into a bool mask. Deterministic for fixed inputs."""
    mask = np.zeros((height, width), dtype=np.uint8)
    pts = np.round(np.asarray(vertices, dtype=np.float64)).astype(np.int32)
    if len(pts) >= 3:
        cv2.fillPoly(mask, [pts], 1)
    return mask.astype(bool)


def trace_components(
    mask: np.ndarray,
    min_area: float = MIN_COMPONENT_AREA,
    tolerance: float = SIMPLIFY_TOLERANCE,
) -> list[np.ndarray]:
    """Trace 8-connected components of a binary mask into simplified polygons.

    Components whose filled area falls below ``min_area`` are dropped.
    Output order is canonical: sorted by bounding-box top edge then left edge.
    """
    m = np.ascontiguousarray(np.asarray(mask).astype(np.uint8))
    contours, _ = cv2.findContours(m, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
    polys: list[np.ndarray] = []
    for contour in contours:
        if cv2.contourArea(contour) < min_area:
            continue
        approx = cv2.approxPolyDP(contour, tolerance, True)
        if len(approx) < 3:
            approx = contour
        if len(approx) < 3:
            continue
        polys.append(approx.reshape(-1, 2).astype(np.float32))
    polys.sort(key=lambda p: (float(p[:, 1].min()), float(p[:, 0].min())))
    return polys


def expand_word_kernels(
    kernel_mask: np.ndarray,
    score: float = 1.0,
    unclip_ratio: float = UNCLIP_RATIO,
    min_area: float = MIN_COMPONENT_AREA,
) -> list[WordInstance]:
    """Turn a binary word-kernel mask into full word instances.

    Each 8-connected component is traced, expanded by the unclip rule, and
    rasterized back at the kernel mask's resolution. Component count is
    preserved: expansion never merges instances because tracing happens first.
    """
    h, w = kernel_mask.shape
    instances: list[WordInstance] = []
    for kernel_poly in trace_components(kernel_mask, min_area=min_area):
        grown = expand_polygon(kernel_poly, unclip_ratio)
        grown[:, 0] = np.clip(grown[:, 0], 0, w - 1)
        grown[:, 1] = np.clip(grown[:, 1], 0, h - 1)
        raster = rasterize_polygon(grown, h, w)
        if not raster.any():
            continue
        instances.append(WordInstance(polygon=grown, mask=raster, score=float(score)))
    return instances


def select_clicked_word(
    instances: list[WordInstance], click: tuple[float, float]
) -> int | None:
    """Pick the instance containing the click, else the nearest one.

    Ties (identical distance) resolve to the lowest index. Returns None when
    there are no instances.
    """
    if not instances:
        return None
    pt = Point(float(click[0]), float(click[1]))
    best_idx = None
    best_dist = np.inf
    for idx, inst in enumerate(instances):
        poly = _as_shapely(inst.polygon)
        if poly.contains(pt) or poly.touches(pt):
            return idx
        dist = poly.distance(pt)
        if dist < best_dist:
            best_dist = dist
            best_idx = idx
    return best_idx
