"""Text-conditioned channel modulation of the search feature map.

Each text feature is projected to the visual channel width by a bias-free
linear map; the projections are summed with a constant 1 and the result is
used as a depthwise 1x1 kernel over the feature map. With all projections
zero the map passes through unchanged.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

from citetrack.encoders import ShapeError

TEXT_SLOTS = ("classes", "color", "material", "texture")


class ProjectionParams(nn.Module):
    def __init__(self, c_text: int, channels: int):
        super().__init__()
        self.c_text = c_text
        self.channels = channels
        self.maps = nn.ModuleDict({k: nn.Linear(c_text, channels, bias=False) for k in TEXT_SLOTS})

    def kernel(self, t_c: Tensor, t_co: Tensor, t_m: Tensor, t_t: Tensor) -> Tensor:
        """``1 + L_c(T_c) + L_co(T_co) + L_m(T_m) + L_t(T_t)``, shape (..., C)."""
        g = self.maps["classes"](t_c) + self.maps["color"](t_co) + self.maps["material"](t_m) + self.maps["texture"](t_t)
        return 1 + g

    def zero_(self) -> "ProjectionParams":
        with torch.no_grad():
            for m in self.maps.values():
                m.weight.zero_()
        return self


def correlate(v: Tensor, t_c: Tensor, t_co: Tensor, t_m: Tensor, t_t: Tensor, params: ProjectionParams) -> Tensor:
    """Modulate ``v`` of shape (B, C, H, W) (or (C, H, W)) channel by channel."""
    if v.shape[-3] != params.channels:
        raise ShapeError(f"feature map has {v.shape[-3]} channels, projections produce {params.channels}")
    g = params.kernel(t_c, t_co, t_m, t_t)
    return g[..., :, None, None] * v
