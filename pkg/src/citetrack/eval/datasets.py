"""Sequences and annotation formats (OTB, GOT-10k) plus results files."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence as Seq

import cv2
import numpy as np

from citetrack.boxes import Box

FRAME_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")


class AnnotationError(ValueError):
    pass


@dataclass
class Sequence:
    """Frames plus per-frame ground truth; ``None`` marks an absent target.

    ``frames`` holds file paths, in-memory arrays, or is replaced by a
    ``loader`` callable mapping a frame index to an RGB uint8 array.
    """

    name: str
    boxes: list[Box | None]
    frames: Seq[Any] = ()
    loader: Callable[[int], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.boxes) == 0:
            raise AnnotationError(f"sequence {self.name!r} has no frames")
        if self.boxes[0] is None:
            raise AnnotationError(f"sequence {self.name!r}: first frame has no ground-truth box")
        if self.loader is None and len(self.frames) != len(self.boxes):
            raise AnnotationError(
                f"sequence {self.name!r}: {len(self.frames)} frames but {len(self.boxes)} annotations"
            )

    def __len__(self):
        return len(self.boxes)

    def frame(self, i: int) -> np.ndarray:
        if self.loader is not None:
            return self.loader(i)
        item = self.frames[i]
        if isinstance(item, np.ndarray):
            return item
        img = cv2.imread(str(item), cv2.IMREAD_COLOR)
        if img is None:
            raise FileNotFoundError(f"cannot read frame {item}")
        return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


_SPLIT = re.compile(r"[,\t ]+")


def parse_box_line(line: str, lineno: int, source: str) -> tuple[float, float, float, float]:
    parts = [p for p in _SPLIT.split(line.strip()) if p]
    if len(parts) != 4:
        raise AnnotationError(f"{source}:{lineno}: expected 4 values x,y,w,h, got {line.strip()!r}")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise AnnotationError(f"{source}:{lineno}: non-numeric value in {line.strip()!r}") from None
    if not all(np.isfinite(vals)):
        raise AnnotationError(f"{source}:{lineno}: non-finite value in {line.strip()!r}")
    return vals  # type: ignore[return-value]


def _lines(path: Path) -> list[tuple[int, str]]:
    return [(i + 1, ln) for i, ln in enumerate(path.read_text().splitlines()) if ln.strip()]


def _frames(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def parse_sequence(path: str | Path, format: str) -> Sequence:
    """Read a sequence directory.

    ``otb``: frames in ``img/``, ``groundtruth_rect.txt`` with 1-based x, y
    (converted to 0-based). ``got10k``: frames in the directory itself,
    ``groundtruth.txt`` (0-based) and an optional ``absence.label`` where 1
    marks a frame without a visible target.
    """
    path = Path(path)
    if format == "otb":
        ann, frame_dir, origin = path / "groundtruth_rect.txt", path / "img", 1.0
    elif format == "got10k":
        ann, frame_dir, origin = path / "groundtruth.txt", path, 0.0
    else:
        raise ValueError(f"unknown sequence format {format!r}")
    if not ann.is_file():
        raise AnnotationError(f"annotation file not found: {ann}")
    rows = [parse_box_line(line, n, str(ann)) for n, line in _lines(ann)]
    absent = [False] * len(rows)
    if format == "got10k" and (path / "absence.label").is_file():
        flags = _lines(path / "absence.label")
        if len(flags) != len(rows):
            raise AnnotationError(f"{path / 'absence.label'}: {len(flags)} flags for {len(rows)} boxes")
        for i, (n, line) in enumerate(flags):
            if line.strip() not in ("0", "1"):
                raise AnnotationError(f"{path / 'absence.label'}:{n}: expected 0 or 1")
            absent[i] = line.strip() == "1"
    boxes: list[Box | None] = []
    for (x, y, w, h), gone in zip(rows, absent):
        boxes.append(None if gone or w <= 0 or h <= 0 else Box(x - origin, y - origin, w, h))
    frames = _frames(frame_dir) if frame_dir.is_dir() else []
    if len(frames) != len(boxes):
        raise AnnotationError(f"{path}: {len(frames)} frames but {len(boxes)} annotations")
    return Sequence(name=path.name, boxes=boxes, frames=frames)


def write_sequence(seq: Sequence, path: str | Path, format: str) -> Path:
    """Write a sequence in ``otb`` or ``got10k`` layout (PNG frames)."""
    path = Path(path)
    if format == "otb":
        frame_dir, ann, origin = path / "img", path / "groundtruth_rect.txt", 1.0
    elif format == "got10k":
        frame_dir, ann, origin = path, path / "groundtruth.txt", 0.0
    else:
        raise ValueError(f"unknown sequence format {format!r}")
    frame_dir.mkdir(parents=True, exist_ok=True)
    lines, flags = [], []
    for i, box in enumerate(seq.boxes):
        cv2.imwrite(str(frame_dir / f"{i + 1:08d}.png"), cv2.cvtColor(seq.frame(i), cv2.COLOR_RGB2BGR))
        if box is None:
            lines.append("0,0,0,0")
            flags.append("1")
        else:
            lines.append(",".join(repr(v) for v in (box.x + origin, box.y + origin, box.w, box.h)))
            flags.append("0")
    ann.write_text("\n".join(lines) + "\n")
    if format == "got10k":
        (path / "absence.label").write_text("\n".join(flags) + "\n")
    return path


def write_results(path: str | Path, boxes: Seq[Box]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{b.x!r},{b.y!r},{b.w!r},{b.h!r}\n" for b in boxes))


def read_results(path: str | Path) -> list[Box]:
    path = Path(path)
    if not path.is_file():
        raise AnnotationError(f"results file not found: {path}")
    out = []
    for n, line in _lines(path):
        x, y, w, h = parse_box_line(line, n, str(path))
        if w <= 0 or h <= 0:
            raise AnnotationError(f"{path}:{n}: box must have positive size")
        out.append(Box(x, y, w, h))
    return out
