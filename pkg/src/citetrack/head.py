"""Center/offset/size prediction head, box decoding, targets and losses.

Grid convention: cell ``(r, c)`` (row, column) of an ``H x W`` map covers
search-crop pixels ``[c*s, (c+1)*s) x [r*s, (r+1)*s)`` for stride ``s``. A
decoded center is ``((c + 0.5 + O_x) * s, (r + 0.5 + O_y) * s)``, so a zero
offset lands on the cell center. Sizes are fractions of the search-crop side.

Maps are channel-first: score (B, H, W), offset (B, 2, H, W) holding
``(O_x, O_y)``, size (B, 2, H, W) holding ``(B_w, B_h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from citetrack.boxes import Box
from citetrack.encoders import ShapeError

LAMBDA_IOU = 2.0
LAMBDA_L1 = 5.0
FOCAL_EPS = 1e-7


@dataclass
class HeadOutputs:
    score: Tensor
    offset: Tensor
    size: Tensor

    def __getitem__(self, i: int) -> "HeadOutputs":
        return HeadOutputs(self.score[i], self.offset[i], self.size[i])


def _conv_bn_relu(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.BatchNorm2d(cout), nn.ReLU(inplace=True))


def _branch(channels: int, out: int) -> nn.Sequential:
    widths = [channels, channels // 2, channels // 4, channels // 8]
    layers = [_conv_bn_relu(channels, widths[0])]
    layers += [_conv_bn_relu(a, b) for a, b in zip(widths[:-1], widths[1:])]
    return nn.Sequential(*layers, nn.Conv2d(widths[-1], out, 1))


class PredictionHead(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.score = _branch(channels, 1)
        self.offset = _branch(channels, 2)
        self.size = _branch(channels, 2)
        # score prior of 0.1 keeps the initial focal loss in a sane range
        nn.init.constant_(self.score[-1].bias, -math.log((1 - 0.1) / 0.1))

    def forward(self, feat: Tensor) -> HeadOutputs:
        if feat.ndim != 4 or feat.shape[1] != self.channels:
            raise ShapeError(f"head expects (B, {self.channels}, H, W), got {tuple(feat.shape)}")
        return HeadOutputs(
            score=torch.sigmoid(self.score(feat)).squeeze(1),
            offset=self.offset(feat),
            size=torch.sigmoid(self.size(feat)),
        )


def argmax_cell(score) -> tuple[int, int]:
    """Row-major argmax; ties go to the lowest flat index."""
    score = np.asarray(score.detach().cpu().numpy() if isinstance(score, Tensor) else score)
    flat = int(np.argmax(score))
    return divmod(flat, score.shape[-1])


def decode_crop_box(out: HeadOutputs, stride: int, search_size: int, cell: tuple[int, int] | None = None) -> Box:
    """Decode a single-sample :class:`HeadOutputs` to a box in search-crop pixels."""
    r, c = argmax_cell(out.score) if cell is None else cell
    off = _np(out.offset)[:, r, c]
    size = _np(out.size)[:, r, c]
    cx = (c + 0.5 + float(off[0])) * stride
    cy = (r + 0.5 + float(off[1])) * stride
    return Box.from_center(cx, cy, float(size[0]) * search_size, float(size[1]) * search_size)


def decode_state(out: HeadOutputs, crop, stride: int | None = None, cell: tuple[int, int] | None = None) -> Box:
    """Decode to frame pixels through ``crop`` (anything with ``box_to_frame``)."""
    h = out.score.shape[-1]
    search_size = crop.out_size
    stride = search_size // h if stride is None else stride
    return crop.box_to_frame(decode_crop_box(out, stride, search_size, cell))


def _np(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.detach().cpu().double().numpy()
    return np.asarray(x, dtype=np.float64)


def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """Largest center displacement (in cells) keeping IoU >= ``min_overlap``."""
    a1 = 1
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(b1 ** 2 - 4 * a1 * c1)) / 2

    a2 = 4
    b2 = 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(b2 ** 2 - 4 * a2 * c2)) / 2

    a3 = 4 * min_overlap
    b3 = -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(b3 ** 2 - 4 * a3 * c3)) / 2
    return min(r1, r2, r3)


def gaussian_heatmap(feat_h: int, feat_w: int, cell: tuple[int, int], radius: int) -> np.ndarray:
    heat = np.zeros((feat_h, feat_w))
    r0, c0 = cell
    sigma = (2 * radius + 1) / 6
    rows = np.arange(feat_h)[:, None] - r0
    cols = np.arange(feat_w)[None, :] - c0
    g = np.exp(-(rows ** 2 + cols ** 2) / (2 * sigma ** 2))
    inside = (np.abs(rows) <= radius) & (np.abs(cols) <= radius)
    heat[inside] = g[inside]
    heat[r0, c0] = 1.0
    return heat


@dataclass
class Targets:
    """Training targets for one sample (numpy, float64)."""

    heatmap: np.ndarray  # (H, W), exactly 1 at the positive cell
    cell: tuple[int, int]
    offset: np.ndarray  # (2,)
    size: np.ndarray  # (2,)
    box: np.ndarray  # (4,) gt box in crop-normalized (x, y, w, h)


def make_targets(gt_box: Box, crop, feat_size: int) -> Targets:
    """Build score/offset/size targets for ``gt_box`` (frame pixels) in ``crop``."""
    out_size = crop.out_size
    stride = out_size / feat_size
    b = crop.box_to_crop(gt_box)
    if b.x >= out_size or b.y >= out_size or b.x + b.w <= 0 or b.y + b.h <= 0:
        raise ValueError("ground-truth box lies outside the crop")
    gx, gy = b.cx / stride, b.cy / stride
    c = min(max(int(math.floor(gx)), 0), feat_size - 1)
    r = min(max(int(math.floor(gy)), 0), feat_size - 1)
    radius = max(0, int(gaussian_radius(b.h / stride, b.w / stride)))
    heat = gaussian_heatmap(feat_size, feat_size, (r, c), radius)
    offset = np.array([gx - c - 0.5, gy - r - 0.5])
    size = np.array([b.w / out_size, b.h / out_size])
    box = np.array([b.x, b.y, b.w, b.h]) / out_size
    return Targets(heat, (r, c), offset, size, box)


def target_outputs(t: Targets) -> HeadOutputs:
    """Maps that a perfect head would emit for ``t`` (one-hot score, constant offset/size)."""
    h, w = t.heatmap.shape
    score = np.zeros((h, w))
    score[t.cell] = 1.0
    offset = np.broadcast_to(t.offset[:, None, None], (2, h, w)).copy()
    size = np.broadcast_to(t.size[:, None, None], (2, h, w)).copy()
    as_t = lambda a: torch.as_tensor(a, dtype=torch.float64)  # noqa: E731
    return HeadOutputs(as_t(score), as_t(offset), as_t(size))


@dataclass
class TargetBatch:
    heatmap: Tensor  # (B, H, W)
    cells: Tensor  # (B, 2) long, (row, col)
    offset: Tensor  # (B, 2)
    size: Tensor  # (B, 2)
    box: Tensor  # (B, 4)

    @classmethod
    def stack(cls, targets: list[Targets], dtype=torch.float32) -> "TargetBatch":
        f = lambda key: torch.as_tensor(np.stack([getattr(t, key) for t in targets]), dtype=dtype)  # noqa: E731
        return cls(
            heatmap=f("heatmap"),
            cells=torch.as_tensor([t.cell for t in targets], dtype=torch.long),
            offset=f("offset"),
            size=f("size"),
            box=f("box"),
        )


def focal_loss(pred: Tensor, target: Tensor, alpha: float = 2.0, beta: float = 4.0, eps: float = FOCAL_EPS) -> Tensor:
    """Penalty-reduced pixel-wise focal loss over Gaussian targets.

    Cells with ``target == 1`` are positives. Negatives near a positive are
    down-weighted by ``(1 - target) ** beta``. The sum is divided by the number
    of positives (or left as is when there are none).
    """
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    p = pred.clamp(eps, 1 - eps)
    pos = target.eq(1).to(p.dtype)
    neg = 1 - pos
    pos_loss = -(torch.log(p) * (1 - p) ** alpha * pos).sum()
    neg_loss = -(torch.log(1 - p) * p ** alpha * (1 - target) ** beta * neg).sum()
    num_pos = pos.sum()
    if num_pos == 0:
        return neg_loss
    return (pos_loss + neg_loss) / num_pos


def _as_xywh(box) -> Tensor:
    if isinstance(box, Box):
        return torch.tensor(box.astuple(), dtype=torch.float64)
    return box


def giou(a, b) -> Tensor:
    """Generalized IoU of boxes given as (..., 4) ``(x, y, w, h)`` tensors or :class:`Box`."""
    a, b = _as_xywh(a), _as_xywh(b)
    if bool((a[..., 2:] <= 0).any()) or bool((b[..., 2:] <= 0).any()):
        raise ValueError("GIoU undefined for zero-area boxes")
    ax2, ay2 = a[..., 0] + a[..., 2], a[..., 1] + a[..., 3]
    bx2, by2 = b[..., 0] + b[..., 2], b[..., 1] + b[..., 3]
    iw = (torch.minimum(ax2, bx2) - torch.maximum(a[..., 0], b[..., 0])).clamp(min=0)
    ih = (torch.minimum(ay2, by2) - torch.maximum(a[..., 1], b[..., 1])).clamp(min=0)
    inter = iw * ih
    union = a[..., 2] * a[..., 3] + b[..., 2] * b[..., 3] - inter
    hull = (torch.maximum(ax2, bx2) - torch.minimum(a[..., 0], b[..., 0])) * (
        torch.maximum(ay2, by2) - torch.minimum(a[..., 1], b[..., 1])
    )
    return inter / union - (hull - union) / hull


def giou_loss(a, b) -> Tensor:
    return 1 - giou(a, b)


@dataclass
class LossBreakdown:
    cls: Tensor
    iou: Tensor
    l1: Tensor
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("cls", "iou", "l1", "total")}


def combine_losses(l_cls, l_iou, l_1):
    return l_cls + LAMBDA_IOU * l_iou + LAMBDA_L1 * l_1


def total_loss(pred: HeadOutputs, targets: TargetBatch) -> LossBreakdown:
    """Weighted sum of focal, GIoU and L1 losses over a batch.

    L1 covers offset and size at the positive cell; GIoU compares the box
    decoded at the positive cell with the ground truth (crop-normalized).
    """
    if pred.score.shape != targets.heatmap.shape:
        raise ShapeError("score map and target heatmap shapes differ")
    if bool((targets.heatmap.eq(1).flatten(1).sum(1) == 0).any()):
        raise ValueError("every target map needs a positive cell")
    feat = pred.score.shape[-1]
    idx = torch.arange(pred.score.shape[0])
    rows, cols = targets.cells[:, 0], targets.cells[:, 1]
    off = pred.offset[idx, :, rows, cols]  # (B, 2)
    size = pred.size[idx, :, rows, cols]
    l_cls = focal_loss(pred.score, targets.heatmap.to(pred.score.dtype))
    l_1 = torch.cat([(off - targets.offset).abs(), (size - targets.size).abs()], dim=1).mean()
    cx = (cols.to(off.dtype) + 0.5 + off[:, 0]) / feat
    cy = (rows.to(off.dtype) + 0.5 + off[:, 1]) / feat
    pred_box = torch.stack([cx - size[:, 0] / 2, cy - size[:, 1] / 2, size[:, 0], size[:, 1]], dim=1)
    l_iou = giou_loss(pred_box, targets.box.to(off.dtype)).mean()
    return LossBreakdown(l_cls, l_iou, l_1, combine_losses(l_cls, l_iou, l_1))
