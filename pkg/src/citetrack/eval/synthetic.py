"""Synthetic tracking sequences: one solid-colored shape on a textured background.

By default two distractor shapes in other palette colors wander beneath the
target, so appearance alone (shape, size) does not identify it; its color does.
Frames are rendered lazily from a per-sequence seed, so a sequence costs only
its background image in memory. Boxes are integer-aligned and exact.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import cv2
import numpy as np

from citetrack.boxes import Box
from citetrack.eval.datasets import Sequence

PALETTE = {
    "black": (20, 20, 20),
    "blue": (30, 60, 220),
    "brown": (130, 80, 30),
    "gray": (128, 128, 128),
    "green": (40, 180, 50),
    "orange": (250, 140, 20),
    "pink": (250, 150, 200),
    "purple": (130, 40, 170),
    "red": (220, 30, 30),
    "white": (240, 240, 240),
    "yellow": (240, 230, 40),
}


@dataclass(frozen=True)
class SyntheticSpec:
    frame_size: tuple[int, int] = (256, 256)  # (width, height)
    num_frames: int = 40
    target_size: tuple[int, int] = (64, 64)
    color: str | None = None  # None: drawn from the palette by seed
    shape: str | None = None  # "rect", "ellipse" or None for random
    max_step: int = 4
    noise: float = 4.0  # per-frame pixel noise std (0-255 scale)
    distractors: int = 2  # other-colored moving shapes drawn beneath the target


def _background(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    coarse = rng.uniform(60, 190, size=(height // 16 + 1, width // 16 + 1, 3)).astype(np.float32)
    smooth = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_CUBIC)
    fine = rng.normal(0, 18, size=(height, width, 3)).astype(np.float32)
    return np.clip(smooth + fine, 0, 255)


def _mask(shape: str, w: int, h: int) -> np.ndarray:
    if shape == "rect":
        return np.ones((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    return ((xx + 0.5 - w / 2) / (w / 2)) ** 2 + ((yy + 0.5 - h / 2) / (h / 2)) ** 2 <= 1.0


def _walk(rng, start, n, max_step, limit_x, limit_y):
    x, y = start
    out = [(x, y)]
    for _ in range(n - 1):
        dx, dy = rng.integers(-max_step, max_step + 1, size=2)
        x = int(np.clip(x + dx, 0, limit_x))
        y = int(np.clip(y + dy, 0, limit_y))
        out.append((x, y))
    return out


def generate_synthetic_sequence(spec: SyntheticSpec, seed: int, name: str | None = None) -> Sequence:
    rng = np.random.default_rng(seed)
    width, height = spec.frame_size
    tw, th = spec.target_size
    if tw > width or th > height:
        raise ValueError("target does not fit in the frame")
    color = spec.color if spec.color is not None else str(rng.choice(sorted(PALETTE)))
    if color not in PALETTE:
        raise ValueError(f"no RGB value for color {color!r}; known: {sorted(PALETTE)}")
    shape = spec.shape if spec.shape is not None else str(rng.choice(["rect", "ellipse"]))
    background = _background(rng, width, height)
    start = (int(rng.integers(0, width - tw + 1)), int(rng.integers(0, height - th + 1)))
    path = _walk(rng, start, spec.num_frames, spec.max_step, width - tw, height - th)
    boxes = [Box(float(x), float(y), float(tw), float(th)) for x, y in path]

    others = [c for c in sorted(PALETTE) if c != color]
    distractors = []
    for _ in range(spec.distractors):
        dw, dh = int(rng.integers(tw // 2, tw + 1)), int(rng.integers(th // 2, th + 1))
        dstart = (int(rng.integers(0, width - dw + 1)), int(rng.integers(0, height - dh + 1)))
        dpath = _walk(rng, dstart, spec.num_frames, spec.max_step, width - dw, height - dh)
        distractors.append((PALETTE[str(rng.choice(others))], _mask(str(rng.choice(["rect", "ellipse"])), dw, dh), dpath))

    mask = _mask(shape, tw, th)
    rgb = np.array(PALETTE[color], dtype=np.float32)
    noise_seed = int(rng.integers(2**31))

    def render(i: int) -> np.ndarray:
        if not 0 <= i < spec.num_frames:
            raise IndexError(i)
        frame = background.copy()
        for drgb, dmask, dpath in distractors:
            dx, dy = dpath[i]
            region = frame[dy:dy + dmask.shape[0], dx:dx + dmask.shape[1]]
            region[dmask] = drgb
        x, y = path[i]
        frame[y:y + th, x:x + tw][mask] = rgb
        if spec.noise > 0:
            frame = frame + np.random.default_rng([noise_seed, i]).normal(0, spec.noise, frame.shape).astype(np.float32)
        return np.clip(np.rint(frame), 0, 255).astype(np.uint8)

    return Sequence(
        name=name or f"synth_{seed:05d}",
        boxes=boxes,
        loader=render,
        meta={"color": color, "shape": shape, "seed": seed, "spec": asdict(spec)},
    )


def generate_synthetic_set(count: int, seed: int, spec: SyntheticSpec | None = None) -> list[Sequence]:
    """``count`` sequences with per-sequence seeds derived from ``seed``."""
    spec = spec or SyntheticSpec()
    seeds = np.random.default_rng(seed).integers(0, 2**31, size=count)
    return [generate_synthetic_sequence(spec, int(s), name=f"synth_{seed}_{k:03d}") for k, s in enumerate(seeds)]
