"""Desk-scale training on synthetic sequences.

Each sample is a (template, search, previous-location patch, ground truth)
quadruple cut from one sequence. The previous location is the ground truth of
the frame before the search frame, randomly shifted and rescaled so the head
sees off-center targets like it would after imperfect predictions.

The optimized objective is the tracking loss plus, when color labels are
known, a cross-entropy on the predicted color distributions (prompt tuning
of the conversion model). The recorded ``total`` is the tracking loss only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from citetrack.boxes import Box
from citetrack.config import TrackerConfig, TrainConfig
from citetrack.eval.datasets import Sequence
from citetrack.eval.synthetic import SyntheticSpec, generate_synthetic_set
from citetrack.head import TargetBatch, make_targets, total_loss
from citetrack.tracker.crop import crop_patch, to_chw
from citetrack.tracker.model import CiteTrackModel

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: CiteTrackModel
    curve: list[dict[str, float]] = field(default_factory=list)


def default_training_set(train: TrainConfig) -> list[Sequence]:
    """The synthetic training sequences described by ``train``."""
    return generate_synthetic_set(
        train.num_sequences, train.seed, SyntheticSpec(num_frames=train.frames_per_sequence)
    )


def jitter_box(box: Box, rng: np.random.Generator, center: float, scale: float) -> Box:
    side = math.sqrt(box.w * box.h)
    dx, dy = rng.uniform(-center, center, size=2) * side
    s = math.exp(rng.uniform(-scale, scale)) if scale > 0 else 1.0
    return Box.from_center(box.cx + dx, box.cy + dy, box.w * s, box.h * s)


def sample_batch(
    model: CiteTrackModel,
    sequences: list[Sequence],
    rng: np.random.Generator,
    train: TrainConfig,
    tracker: TrackerConfig,
):
    cfg = model.cfg
    templates, searches, currents, targets, colors = [], [], [], [], []
    for _ in range(train.batch_size):
        seq = sequences[int(rng.integers(len(sequences)))]
        n = len(seq)
        j = int(rng.integers(1, n)) if n > 1 else 0
        i = int(rng.integers(max(0, j - train.max_gap), min(n, j + train.max_gap + 1)))
        gt_t, gt_s = seq.boxes[i], seq.boxes[j]
        prev = jitter_box(seq.boxes[max(j - 1, 0)], rng, train.center_jitter, train.scale_jitter)
        frame_t, frame_s = seq.frame(i), seq.frame(j)
        t_patch, _ = crop_patch(frame_t, gt_t, tracker.template_factor, cfg.template_size)
        s_patch, s_map = crop_patch(frame_s, prev, tracker.search_factor, cfg.search_size)
        c_patch, _ = crop_patch(frame_s, prev, tracker.template_factor, cfg.template_size)
        templates.append(to_chw(t_patch))
        searches.append(to_chw(s_patch))
        currents.append(to_chw(c_patch))
        targets.append(make_targets(gt_s, s_map, cfg.feat_size))
        color = seq.meta.get("color")
        colors.append(model.vocab.index("color", color) if color in model.vocab.labels("color") else -1)
    return (
        torch.stack(templates),
        torch.stack(searches),
        torch.stack(currents),
        TargetBatch.stack(targets),
        torch.as_tensor(colors, dtype=torch.long),
    )


def _color_ce(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    known = labels >= 0
    if not bool(known.any()):
        return probs.new_zeros(())
    p = probs[known].gather(1, labels[known, None]).squeeze(1)
    return -torch.log(p.clamp_min(1e-12)).mean()


def train_toy(
    model: CiteTrackModel,
    sequences: list[Sequence],
    train: TrainConfig | None = None,
    tracker: TrackerConfig | None = None,
    progress: bool = False,
) -> TrainResult:
    """Minimize the tracking loss over all trainable parameters. Deterministic per seed."""
    train = train or TrainConfig()
    tracker = tracker or TrackerConfig()
    rng = np.random.default_rng(train.seed)
    torch.manual_seed(train.seed)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(params, lr=train.lr, weight_decay=train.weight_decay)
    if train.schedule == "cosine":
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(train.iterations, 1))
    elif train.schedule == "constant":
        sched = None
    else:
        raise ValueError(f"unknown learning-rate schedule {train.schedule!r}")
    model.train()
    curve = []
    for it in range(1, train.iterations + 1):
        template, search, current, targets, colors = sample_batch(model, sequences, rng, train, tracker)
        out, extras = model(template, search, current, use_text=tracker.use_text, dynamic=tracker.dynamic)
        losses = total_loss(out, targets)
        prompt = out.score.new_zeros(())
        if extras and train.prompt_weight > 0:
            prompt = 0.5 * (
                _color_ce(extras["reference"].probs["color"], colors)
                + _color_ce(extras["current"].probs["color"], colors)
            )
        objective = losses.total + train.prompt_weight * prompt
        if not torch.isfinite(objective):
            raise TrainingDiverged(f"non-finite loss at iteration {it}: {losses.as_floats()}")
        opt.zero_grad()
        objective.backward()
        if train.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(params, train.grad_clip)
        opt.step()
        if sched is not None:
            sched.step()
        row = {"iteration": it, **losses.as_floats(), "prompt": float(prompt.detach())}
        curve.append(row)
        if progress and (it == 1 or it % 20 == 0):
            log.info("iter %d total %.4f cls %.4f iou %.4f l1 %.4f prompt %.4f", it, row["total"],
                     row["cls"], row["iou"], row["l1"], row["prompt"])
    model.eval()
    return TrainResult(model=model, curve=curve)
