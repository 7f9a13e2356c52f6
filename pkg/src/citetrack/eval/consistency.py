from __future__ import annotations

from collections import Counter
from typing import Mapping, Sequence


def majority_label(labels: Sequence[int]) -> int:
    """Most frequent label; ties go to the lowest label index."""
    counts = Counter(labels)
    best = max(counts.values())
    return min(label for label, c in counts.items() if c == best)


def description_consistency(per_frame_labels: Mapping[str, Sequence[int]]) -> dict[str, float]:
    """Fraction of frames whose predicted label equals the sequence majority, per kind."""
    out = {}
    for kind, labels in per_frame_labels.items():
        if len(labels) == 0:
            raise ValueError(f"no labels recorded for {kind!r}")
        top = majority_label(labels)
        out[kind] = sum(1 for x in labels if x == top) / len(labels)
    return out
