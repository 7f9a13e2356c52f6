"""Square context crops around a box, with an exact frame <-> crop mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
import torch

from citetrack.boxes import Box


@dataclass(frozen=True)
class CropMapping:
    """Affine map between frame pixels and crop pixels.

    ``crop = (frame - origin) * scale`` with ``origin = center - side / 2`` and
    ``scale = out_size / side``. Coordinates are continuous: pixel ``i`` spans
    ``[i, i + 1)``.
    """

    frame_size: tuple[int, int]  # (width, height)
    center: tuple[float, float]
    side: float
    out_size: int
    padding: tuple[float, float, float, float]  # left, top, right, bottom, in frame pixels

    @property
    def scale(self) -> float:
        return self.out_size / self.side

    @property
    def origin(self) -> tuple[float, float]:
        return self.center[0] - self.side / 2, self.center[1] - self.side / 2

    def point_to_crop(self, x, y):
        ox, oy = self.origin
        return (np.asarray(x) - ox) * self.scale, (np.asarray(y) - oy) * self.scale

    def point_to_frame(self, u, v):
        ox, oy = self.origin
        return np.asarray(u) / self.scale + ox, np.asarray(v) / self.scale + oy

    def box_to_crop(self, box: Box) -> Box:
        x, y = self.point_to_crop(box.x, box.y)
        return Box(float(x), float(y), box.w * self.scale, box.h * self.scale)

    def box_to_frame(self, box: Box) -> Box:
        x, y = self.point_to_frame(box.x, box.y)
        return Box(float(x), float(y), box.w / self.scale, box.h / self.scale)


def crop_side(box: Box, area_factor: float) -> float:
    return math.sqrt(area_factor * box.w * box.h)


def crop_patch(frame: np.ndarray, box: Box, area_factor: float, out_size: int) -> tuple[np.ndarray, CropMapping]:
    """Crop a square of ``area_factor`` times the box area around its center.

    Returns the patch as float32 ``(out_size, out_size, 3)`` in [0, 1] and the
    mapping. Pixels outside the frame take the frame's mean color.
    """
    height, width = frame.shape[:2]
    if box.x >= width or box.y >= height or box.x + box.w <= 0 or box.y + box.h <= 0:
        raise ValueError(f"box {box} lies entirely outside the {width}x{height} frame")
    side = crop_side(box, area_factor)
    cx, cy = box.cx, box.cy
    x0, y0 = cx - side / 2, cy - side / 2
    padding = (max(0.0, -x0), max(0.0, -y0), max(0.0, x0 + side - width), max(0.0, y0 + side - height))
    mapping = CropMapping((width, height), (cx, cy), side, out_size, padding)

    a = out_size / side
    # warpAffine works in pixel-index coordinates where pixel centers are integers
    m = np.array([[a, 0.0, a * (0.5 - x0) - 0.5], [0.0, a, a * (0.5 - y0) - 0.5]])
    mean = frame.reshape(-1, frame.shape[-1]).mean(axis=0)
    patch = cv2.warpAffine(
        frame,
        m,
        (out_size, out_size),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=tuple(float(v) for v in mean),
    )
    patch = patch.astype(np.float32)
    if frame.dtype == np.uint8:
        patch /= 255.0
    return patch, mapping


def to_chw(patch: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(patch.transpose(2, 0, 1)))
