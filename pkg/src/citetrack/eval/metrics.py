"""Overlap and center-error metrics.

Conventions: success uses 21 thresholds ``k / 20`` with strict ``iou > t``;
precision counts center errors ``<= 20`` px; normalized precision sweeps 101
thresholds ``k * 0.005`` over ``[0, 0.5]`` with ``<=``. Averages are computed
from integer counts or with correctly rounded sums so they are reproducible.
"""

from __future__ import annotations

import math
import statistics
from typing import Sequence

import numpy as np

from citetrack.boxes import Box, iou

SUCCESS_THRESHOLDS = np.arange(21) / 20
NORM_PRECISION_THRESHOLDS = np.arange(101) * 0.005
PRECISION_PIXELS = 20.0


def _check(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("metric input must be a non-empty 1-D sequence")
    return arr


def success_curve(ious: Sequence[float]) -> np.ndarray:
    arr = _check(ious)
    return (arr[None, :] > SUCCESS_THRESHOLDS[:, None]).sum(axis=1) / arr.size


def success_auc(ious: Sequence[float]) -> float:
    arr = _check(ious)
    counts = (arr[None, :] > SUCCESS_THRESHOLDS[:, None]).sum()
    return int(counts) / (SUCCESS_THRESHOLDS.size * arr.size)


def precision(center_errors: Sequence[float], threshold: float = PRECISION_PIXELS) -> float:
    arr = _check(center_errors)
    return int((arr <= threshold).sum()) / arr.size


def precision_curve(center_errors: Sequence[float], max_px: int = 50) -> np.ndarray:
    arr = _check(center_errors)
    t = np.arange(max_px + 1, dtype=np.float64)
    return (arr[None, :] <= t[:, None]).sum(axis=1) / arr.size


def normalized_precision(norm_errors: Sequence[float]) -> float:
    arr = _check(norm_errors)
    counts = (arr[None, :] <= NORM_PRECISION_THRESHOLDS[:, None]).sum()
    return int(counts) / (NORM_PRECISION_THRESHOLDS.size * arr.size)


def ao_sr(ious: Sequence[float]) -> tuple[float, float, float]:
    """Average overlap and success rates at 0.5 and 0.75 (strict inequality)."""
    arr = _check(ious)
    ao = statistics.mean(arr.tolist())  # exact rational mean, correctly rounded
    return ao, int((arr > 0.5).sum()) / arr.size, int((arr > 0.75).sum()) / arr.size


def center_errors(pred: Sequence[Box], gt: Sequence[Box]) -> np.ndarray:
    return np.array([math.hypot(p.cx - g.cx, p.cy - g.cy) for p, g in zip(pred, gt)])


def normalized_center_errors(pred: Sequence[Box], gt: Sequence[Box]) -> np.ndarray:
    return np.array([math.hypot((p.cx - g.cx) / g.w, (p.cy - g.cy) / g.h) for p, g in zip(pred, gt)])


def paired(pred: Sequence[Box], gt: Sequence[Box | None]) -> tuple[list[Box], list[Box]]:
    """Drop frames without ground truth."""
    if len(pred) != len(gt):
        raise ValueError(f"{len(pred)} predicted boxes for {len(gt)} ground-truth frames")
    keep = [(p, g) for p, g in zip(pred, gt) if g is not None]
    return [p for p, _ in keep], [g for _, g in keep]


def evaluate_boxes(pred: Sequence[Box], gt: Sequence[Box | None]) -> dict[str, float]:
    p, g = paired(pred, gt)
    ious = [iou(a, b) for a, b in zip(p, g)]
    ao, sr50, sr75 = ao_sr(ious)
    return {
        "auc": success_auc(ious),
        "precision": precision(center_errors(p, g)),
        "norm_precision": normalized_precision(normalized_center_errors(p, g)),
        "ao": ao,
        "sr50": sr50,
        "sr75": sr75,
    }


METRIC_KEYS = ("auc", "precision", "norm_precision", "ao", "sr50", "sr75")
