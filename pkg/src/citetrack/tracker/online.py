"""Online tracking loop.

Per frame: crop the search region around the previous box, describe the patch
at the previous location, reweight attribute features against the frozen
reference description, extract joint features, correlate, decode.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from citetrack.boxes import Box, clamp_box
from citetrack.config import TrackerConfig
from citetrack.correlate import correlate
from citetrack.dyndesc import dynamic_features
from citetrack.head import decode_state
from citetrack.textconv import TargetDescription, describe
from citetrack.tracker.crop import crop_patch, to_chw
from citetrack.tracker.model import CiteTrackModel
from citetrack.vocab import ATTRIBUTE_KINDS


@dataclass
class TrackerState:
    reference: TargetDescription
    template: torch.Tensor  # (1, 3, P, P)
    current: TargetDescription
    box: Box
    frame_index: int = 0
    reference_checksum: str = field(default="", repr=False)


def hann_window(size: int) -> np.ndarray:
    w = np.hanning(size)
    return np.outer(w, w)


class Tracker:
    def __init__(self, model: CiteTrackModel, config: TrackerConfig | None = None):
        self.model = model.eval()
        self.config = config or TrackerConfig()
        self.window = hann_window(model.cfg.feat_size)

    def _patch(self, frame: np.ndarray, box: Box, factor: float, size: int):
        patch, mapping = crop_patch(frame, box, factor, size)
        return to_chw(patch).unsqueeze(0).to(self._dtype()), mapping

    def _dtype(self):
        return next(self.model.parameters()).dtype

    def init(self, frame: np.ndarray, box: Box) -> TrackerState:
        cfg = self.model.cfg
        template, _ = self._patch(frame, box, self.config.template_factor, cfg.template_size)
        reference = describe(template, self.model.conversion, source="frame0")
        return TrackerState(
            reference=reference,
            template=template,
            current=reference,
            box=box,
            frame_index=0,
            reference_checksum=reference.checksum(),
        )

    @torch.no_grad()
    def track(self, state: TrackerState, frame: np.ndarray) -> tuple[Box, TrackerState, dict]:
        cfg, tcfg = self.model.cfg, self.config
        index = state.frame_index + 1
        search, search_map = self._patch(frame, state.box, tcfg.search_factor, cfg.search_size)
        feat = self.model.backbone(state.template, search)
        diagnostics: dict = {"frame": index}
        current = state.current
        if tcfg.use_text:
            if tcfg.dynamic:
                patch, _ = self._patch(frame, state.box, tcfg.template_factor, cfg.template_size)
                current = describe(patch, self.model.conversion, source=f"frame{index}")
            ref = state.reference
            attr = {k: current.features[k] for k in ATTRIBUTE_KINDS}
            feats, weights = dynamic_features(ref.probs, current.probs, attr)
            feat = correlate(
                feat, ref.features["classes"], feats["color"], feats["material"], feats["texture"],
                self.model.projections,
            )
            diagnostics["labels"] = dict(current.indices)
            diagnostics["weights"] = [float(w) for w in weights]
        out = self.model.head(feat)[0]
        if tcfg.window:
            w = torch.as_tensor(self.window, dtype=out.score.dtype)
            out = replace(out, score=out.score * ((1 - tcfg.window_weight) + tcfg.window_weight * w))
        diagnostics["peak"] = float(out.score.max())
        box = decode_state(out, search_map)
        height, width = frame.shape[:2]
        box = clamp_box(box, width, height, tcfg.min_box_size)
        new_state = replace(state, current=current, box=box, frame_index=index)
        return box, new_state, diagnostics

    def run(self, frames, init_box: Box) -> tuple[list[Box], list[dict]]:
        """Track over an iterable of frames; the first frame is the initialization frame."""
        it = iter(frames)
        first = next(it)
        state = self.init(first, init_box)
        boxes = [init_box]
        diags = [{"frame": 0, "labels": dict(state.reference.indices)}]
        for frame in it:
            box, state, diag = self.track(state, frame)
            boxes.append(box)
            diags.append(diag)
        return boxes, diags

    def run_sequence(self, seq, start: int = 0, init_box: Box | None = None) -> list[Box]:
        """Adapter for the robustness protocols: boxes for frames ``start..end``."""
        box = init_box if init_box is not None else seq.boxes[start]
        frames = (seq.frame(i) for i in range(start, len(seq)))
        return self.run(frames, box)[0]
