"""Metric reports (JSON) and curve plots (PNG)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from citetrack.eval.metrics import METRIC_KEYS, SUCCESS_THRESHOLDS  # noqa: E402

PROTOCOLS = ("plain", "tre", "sre-shift", "sre-scale")


@dataclass
class MetricReport:
    protocol: str
    per_sequence: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")

    def add(self, name: str, metrics: dict) -> None:
        self.per_sequence[name] = metrics

    @property
    def aggregate(self) -> dict[str, float]:
        """Mean over sequences of every scalar metric."""
        if not self.per_sequence:
            return {}
        rows = list(self.per_sequence.values())
        keys = [k for k in rows[0] if isinstance(rows[0][k], (int, float))]
        return {k: math.fsum(r[k] for r in rows) / len(rows) for k in keys}

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "per_sequence": self.per_sequence, "aggregate": self.aggregate}

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        data = json.loads(Path(path).read_text())
        return cls(protocol=data["protocol"], per_sequence=data["per_sequence"])

    def summary(self) -> str:
        agg = self.aggregate
        cells = " ".join(f"{k}={agg[k]:.4f}" for k in METRIC_KEYS + ("auc_worst",) if k in agg)
        return f"[{self.protocol}] {len(self.per_sequence)} sequences: {cells}"


def plot_curves(success: dict[str, np.ndarray], precision: dict[str, np.ndarray], out_dir: str | Path) -> list[Path]:
    """Success (vs IoU threshold) and precision (vs pixel threshold) plots, one line per label."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, curve in success.items():
        ax.plot(SUCCESS_THRESHOLDS, curve, label=f"{label} [{float(np.mean(curve)):.3f}]")
    ax.set(xlabel="Overlap threshold", ylabel="Success rate", xlim=(0, 1), ylim=(0, 1.02), title="Success plot")
    ax.legend(loc="lower left", fontsize=8)
    paths.append(out_dir / "success.png")
    fig.savefig(paths[-1], dpi=100, bbox_inches="tight")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4))
    for label, curve in precision.items():
        ax.plot(np.arange(curve.size), curve, label=f"{label} [{float(curve[min(20, curve.size - 1)]):.3f}]")
    ax.set(xlabel="Location error threshold (px)", ylabel="Precision", ylim=(0, 1.02), title="Precision plot")
    ax.legend(loc="lower right", fontsize=8)
    paths.append(out_dir / "precision.png")
    fig.savefig(paths[-1], dpi=100, bbox_inches="tight")
    plt.close(fig)
    return paths


def plot_boxes(frame: np.ndarray, boxes: dict[str, object], path: str | Path) -> Path:
    """Draw labelled boxes over a frame and save it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = frame.shape[:2]
    fig, ax = plt.subplots(figsize=(w / 100, h / 100), dpi=100)
    ax.imshow(frame)
    colors = ["lime", "red", "cyan", "yellow"]
    for (label, b), color in zip(boxes.items(), colors * 4):
        if b is None:
            continue
        ax.add_patch(plt.Rectangle((b.x, b.y), b.w, b.h, fill=False, edgecolor=color, linewidth=1.5, label=label))
    ax.axis("off")
    ax.legend(loc="upper right", fontsize=6)
    fig.savefig(path, bbox_inches="tight", pad_inches=0)
    plt.close(fig)
    return path
