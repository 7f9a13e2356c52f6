"""Attribute drift weighting.

Drift per attribute kind is the L1 distance between the reference and the
current probability vectors over that kind's values. The three drifts go
through ``softmax(-D)`` so attributes that changed least get the most weight,
and each attribute feature is scaled by its weight.
"""

from __future__ import annotations

from typing import Mapping

import torch
from torch import Tensor

from citetrack.encoders import ShapeError
from citetrack.vocab import ATTRIBUTE_KINDS


def attribute_difference(ref: Tensor, cur: Tensor) -> Tensor:
    if ref.shape != cur.shape:
        raise ShapeError(f"reference {tuple(ref.shape)} and current {tuple(cur.shape)} distributions differ in shape")
    return (ref - cur).abs().sum(dim=-1)


def attribute_weights(d_color: Tensor, d_material: Tensor, d_texture: Tensor) -> Tensor:
    """Returns weights stacked on the last axis in (color, material, texture) order."""
    d = torch.stack([torch.as_tensor(d_color), torch.as_tensor(d_material), torch.as_tensor(d_texture)], dim=-1)
    if bool((d < 0).any()):
        raise ValueError("attribute differences must be non-negative")
    return torch.softmax(-d, dim=-1)


def dynamic_attribute_features(
    weights: Tensor, t_color: Tensor, t_material: Tensor, t_texture: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    if not (t_color.shape == t_material.shape == t_texture.shape):
        raise ShapeError("attribute features must share one dimension")
    w = weights.unsqueeze(-1)
    return w[..., 0, :] * t_color, w[..., 1, :] * t_material, w[..., 2, :] * t_texture


def dynamic_features(
    ref_probs: Mapping[str, Tensor], cur_probs: Mapping[str, Tensor], cur_features: Mapping[str, Tensor]
) -> tuple[dict[str, Tensor], Tensor]:
    """Full drift -> weights -> scaling pass. Returns (features by kind, weights)."""
    diffs = [attribute_difference(ref_probs[k], cur_probs[k]) for k in ATTRIBUTE_KINDS]
    weights = attribute_weights(*diffs)
    scaled = dynamic_attribute_features(weights, *(cur_features[k] for k in ATTRIBUTE_KINDS))
    return dict(zip(ATTRIBUTE_KINDS, scaled)), weights
