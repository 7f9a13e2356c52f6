"""Plain, temporal (TRE) and spatial (SRE) robustness protocols.

A tracker here is any callable ``run(seq, start, init_box) -> list[Box]``
returning one box per frame from ``start`` to the end, the first being the
initialization box. :meth:`citetrack.tracker.Tracker.run_sequence` fits.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence as Seq

from citetrack.boxes import Box
from citetrack.eval.datasets import Sequence
from citetrack.eval.metrics import METRIC_KEYS, evaluate_boxes

RunFn = Callable[[Sequence, int, Box], list]

SHIFT_FRACTION = 0.1
SHIFT_DIRECTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1))
SCALE_FACTORS = (0.8, 0.9, 1.1, 1.2)


def _mean_metrics(rows: Seq[dict[str, float]]) -> dict[str, float]:
    return {k: math.fsum(r[k] for r in rows) / len(rows) for k in METRIC_KEYS}


def run_plain(run: RunFn, seq: Sequence) -> dict[str, float]:
    return evaluate_boxes(run(seq, 0, seq.boxes[0]), seq.boxes)


def tre_starts(seq: Sequence, segments: int) -> list[int]:
    """Evenly spaced start frames, each moved forward to the next annotated frame."""
    n = len(seq)
    starts = []
    for k in range(segments):
        s = (k * n) // segments
        while s < n and seq.boxes[s] is None:
            s += 1
        if s < n and s not in starts:
            starts.append(s)
    return starts


def run_tre(run: RunFn, seq: Sequence, segments: int = 20) -> dict:
    rows = []
    for s in tre_starts(seq, segments):
        rows.append(evaluate_boxes(run(seq, s, seq.boxes[s]), seq.boxes[s:]))
    result = _mean_metrics(rows)
    result["auc_worst"] = min(r["auc"] for r in rows)
    result["segments"] = rows
    return result


def shift_boxes(box: Box, fraction: float = SHIFT_FRACTION, directions=SHIFT_DIRECTIONS) -> list[Box]:
    return [box.shifted(dx * fraction * box.w, dy * fraction * box.h) for dx, dy in directions]


def scale_boxes(box: Box, factors: Seq[float] = SCALE_FACTORS) -> list[Box]:
    return [box.scaled(f) for f in factors]


def run_sre(
    run: RunFn,
    seq: Sequence,
    mode: str,
    shifts: Seq[tuple[float, float]] | None = None,
    scales: Seq[float] | None = None,
) -> dict:
    """Re-run from perturbed first-frame boxes.

    ``shifts`` are (dx, dy) multiples of the box size and ``scales`` are size
    factors; they override the default perturbation sets (mainly for tests).
    """
    gt0 = seq.boxes[0]
    if mode == "shift":
        dirs = SHIFT_DIRECTIONS if shifts is None else shifts
        inits = shift_boxes(gt0, SHIFT_FRACTION if shifts is None else 1.0, dirs)
    elif mode == "scale":
        inits = scale_boxes(gt0, SCALE_FACTORS if scales is None else scales)
    else:
        raise ValueError(f"unknown SRE mode {mode!r}")
    rows = [evaluate_boxes(run(seq, 0, b), seq.boxes) for b in inits]
    result = _mean_metrics(rows)
    result["runs"] = rows
    return result
