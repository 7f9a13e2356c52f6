"""Axis-aligned boxes in ``(x, y, w, h)`` pixel form, top-left origin."""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2

    @property
    def cy(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def astuple(self) -> tuple[float, float, float, float]:
        return astuple(self)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "Box":
        return cls(cx - w / 2, cy - h / 2, w, h)

    def shifted(self, dx: float, dy: float) -> "Box":
        return Box(self.x + dx, self.y + dy, self.w, self.h)

    def scaled(self, factor: float) -> "Box":
        """Scale about the center. ``factor == 1`` returns identical coordinates."""
        grow = factor - 1.0
        return Box(self.x - grow * self.w / 2, self.y - grow * self.h / 2, self.w * factor, self.h * factor)


def iou(a: Box, b: Box) -> float:
    # areas from the same corner differences as the overlap, so iou(a, a) == 1 exactly
    ax2, ay2, bx2, by2 = a.x + a.w, a.y + a.h, b.x + b.w, b.y + b.h
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - a.x) * (ay2 - a.y) + (bx2 - b.x) * (by2 - b.y) - inter
    return min(1.0, inter / union)


def center_error(a: Box, b: Box) -> float:
    return float(np.hypot(a.cx - b.cx, a.cy - b.cy))


def clamp_box(box: Box, width: float, height: float, min_size: float = 1.0) -> Box:
    """Clip a box to the frame ``[0, width] x [0, height]`` keeping a minimum size."""
    min_w = min(min_size, width)
    min_h = min(min_size, height)
    x1 = min(max(box.x, 0.0), width - min_w)
    y1 = min(max(box.y, 0.0), height - min_h)
    x2 = min(max(box.x + box.w, x1 + min_w), width)
    y2 = min(max(box.y + box.h, y1 + min_h), height)
    return Box(x1, y1, x2 - x1, y2 - y1)
