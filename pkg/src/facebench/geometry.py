"""Axis-aligned box arithmetic.

Boxes are ``(x, y, width, height)`` in pixels, closed-open on real
coordinates: two boxes that only share an edge have zero intersection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, order=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "width", "height"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"box {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"box dimensions must be positive, got {self.width}x{self.height}")

    @property
    def right(self) -> float:
        return self.x + self.width

    @property
    def bottom(self) -> float:
        return self.y + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.width / 2, self.y + self.height / 2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.width, self.height)

    def scaled(self, factor: float) -> BoundingBox:
        """Scale about the box center."""
        cx, cy = self.center
        w = self.width * factor
        h = self.height * factor
        return BoundingBox(cx - w / 2, cy - h / 2, w, h)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x + a.width, b.x + b.width) - max(a.x, b.x)
    h = min(a.y + a.height, b.y + b.height) - max(a.y, b.y)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def modified_jaccard(gt: BoundingBox, det: BoundingBox) -> float:
    """Overlap of a detection with a ground-truth box.

    The union term only counts a quarter of the ground-truth area, so a
    detection lying entirely inside ``gt`` and covering at least a fourth
    of it scores 1. Argument order matters.
    """
    inter = intersection_area(gt, det)
    if inter == 0:
        return 0.0
    return inter / (max(gt.area / 4, inter) + det.area - inter)


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float64 array of ``x, y, w, h``."""
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def _intersections(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, aw, ah = (a[:, i, None] for i in range(4))
    bx, by, bw, bh = (b[None, :, i] for i in range(4))
    w = np.minimum(ax + aw, bx + bw) - np.maximum(ax, bx)
    h = np.minimum(ay + ah, by + bh) - np.maximum(ay, by)
    return np.where((w > 0) & (h > 0), w * h, 0.0)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    inter = _intersections(a, b)
    area_a = (a[:, 2] * a[:, 3])[:, None]
    area_b = (b[:, 2] * b[:, 3])[None, :]
    union = area_a + area_b - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(inter > 0, inter / union, 0.0)


def modified_jaccard_matrix(gt: np.ndarray, det: np.ndarray) -> np.ndarray:
    """``J[i, j]`` for ground-truth row ``i`` against detection row ``j``.

    Computed with the same operation order as :func:`modified_jaccard` so
    both agree bit-for-bit.
    """
    inter = _intersections(gt, det)
    area_g = (gt[:, 2] * gt[:, 3])[:, None]
    area_d = (det[:, 2] * det[:, 3])[None, :]
    denom = np.maximum(area_g / 4, inter) + area_d - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(inter > 0, inter / denom, 0.0)
