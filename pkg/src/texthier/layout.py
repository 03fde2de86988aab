"""Layout analysis: grouping per-line paragraph masks into paragraph clusters.

Every surviving text line carries its own full-paragraph mask prediction.
Lines belonging to the same paragraph predict nearly the same mask, so
clustering is plain transitive closure over strong pairwise IoU: build the
IoU matrix, connect pairs strictly above the threshold, and read off the
union-find components.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

LAYOUT_IOU_THRESHOLD = 0.5


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def mask_iou_matrix(masks: np.ndarray) -> np.ndarray:
    """Pairwise IoU of K binary masks, shape [K, K].

    Convention: a pair of empty masks has IoU 0, and an empty mask's diagonal
    entry is 0 (an empty prediction is not similar to anything, including
    itself). Non-empty diagonals are exactly 1.
    """
    masks = np.asarray(masks)
    if masks.ndim != 3:
        raise ValidationError(f"expected [K,H,W] mask stack, got {masks.shape}")
    k = masks.shape[0]
    if k == 0:
        return np.zeros((0, 0), dtype=np.float64)
    flat = masks.reshape(k, -1).astype(np.float64)
    areas = flat.sum(axis=1)
    inter = flat @ flat.T
    union = areas[:, None] + areas[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)
    return iou


def cluster_paragraphs(
    masks: np.ndarray, iou_threshold: float = LAYOUT_IOU_THRESHOLD
) -> list[int]:
    """Assign a cluster id to each mask via transitive closure of IoU edges.

    An edge exists when pairwise IoU is strictly greater than the threshold.
    Cluster ids are canonical: each cluster is labeled by its smallest member
    index, then ids are renumbered densely in order of first appearance, so
    the assignment is invariant to the internal union order.
    """
    iou = mask_iou_matrix(masks)
    k = iou.shape[0]
    uf = UnionFind(k)
    for i in range(k):
        for j in range(i + 1, k):
            if iou[i, j] > iou_threshold:
                uf.union(i, j)
    root_to_id: dict[int, int] = {}
    labels = []
    for i in range(k):
        root = uf.find(i)
        if root not in root_to_id:
            root_to_id[root] = len(root_to_id)
        labels.append(root_to_id[root])
    return labels


def cluster_members(labels: list[int]) -> list[list[int]]:
    """Invert a label assignment into member lists, ordered by cluster id."""
    if not labels:
        return []
    groups: list[list[int]] = [[] for _ in range(max(labels) + 1)]
    for idx, lab in enumerate(labels):
        groups[lab].append(idx)
    return groups
