"""Image-to-text conversion with image-conditioned prompt learning.

A target patch is encoded to an image feature ``x``. A small Meta-Net maps
``x`` to a bias token that shifts every learnable prompt token; the shifted
prompts are prepended to each label's word embeddings and encoded by the text
encoder. Label probabilities are a temperature-scaled softmax over cosine
similarities between ``x`` and the encoded prompts.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from citetrack.config import ModelConfig
from citetrack.encoders import ImageEncoder, ShapeError, TextEncoder
from citetrack.vocab import ATTRIBUTE_KINDS, KINDS, LabelEmbeddings, Vocabulary


class DegenerateInputError(ValueError):
    pass


class MetaNet(nn.Module):
    """Linear-ReLU-Linear with the hidden layer 16x narrower than the input."""

    def __init__(self, d_img: int, d_tok: int):
        super().__init__()
        hidden = d_img // 16
        if hidden < 1:
            raise ShapeError("d_img must be at least 16")
        self.d_img = d_img
        self.linear1 = nn.Linear(d_img, hidden)
        self.linear2 = nn.Linear(hidden, d_tok)

    def forward(self, x: Tensor) -> Tensor:
        return self.linear2(F.relu(self.linear1(x)))


class PromptContext(nn.Module):
    """Learnable prompt tokens, the Meta-Net, and the softmax temperature."""

    def __init__(self, num_prompts: int, d_img: int, d_tok: int, tau_init: float = 0.07):
        super().__init__()
        if num_prompts < 1:
            raise ShapeError("need at least one prompt token")
        if tau_init <= 0:
            raise ValueError("temperature must be positive")
        self.prompts = nn.Parameter(torch.randn(num_prompts, d_tok) * 0.02)
        self.meta_net = MetaNet(d_img, d_tok)
        # parametrised in log space so tau stays positive under gradient updates
        self.log_tau = nn.Parameter(torch.tensor(math.log(tau_init)))

    @property
    def tau(self) -> Tensor:
        return self.log_tau.exp()


def meta_net_forward(x: Tensor, ctx: PromptContext) -> Tensor:
    if x.shape[-1] != ctx.meta_net.d_img:
        raise ShapeError(f"image feature has dimension {x.shape[-1]}, Meta-Net expects {ctx.meta_net.d_img}")
    return ctx.meta_net(x)


def build_prompts(
    prompts: Tensor, bias: Tensor, label_tokens: Tensor, label_mask: Tensor
) -> tuple[Tensor, Tensor]:
    """Assemble ``m_i(x) = [v_1 + b, ..., v_K + b, c_i]`` for every label.

    Args:
        prompts: (K, d) prompt tokens.
        bias: (..., d) Meta-Net output.
        label_tokens: (N, L, d) zero-padded label embeddings.
        label_mask: (N, L) True where ``label_tokens`` holds a real token.

    Returns:
        tokens of shape (..., N, K + L, d) and the matching boolean mask. The
        first K positions of every sequence are the shifted prompt tokens.
    """
    d = prompts.shape[-1]
    if bias.shape[-1] != d or label_tokens.shape[-1] != d:
        raise ShapeError("prompt, bias and label token dimensions must agree")
    lead = bias.shape[:-1]
    n, length, _ = label_tokens.shape
    k = prompts.shape[0]
    shifted = prompts + bias.unsqueeze(-2)  # (..., K, d)
    shifted = shifted.unsqueeze(-3).expand(*lead, n, k, d)
    labels = label_tokens.to(prompts.dtype).expand(*lead, n, length, d)
    tokens = torch.cat([shifted, labels], dim=-2)
    mask = torch.cat(
        [torch.ones(n, k, dtype=torch.bool, device=label_mask.device), label_mask], dim=-1
    ).expand(*lead, n, k + length)
    return tokens, mask


def label_text_features(tokens: Tensor, mask: Tensor, text_encoder: TextEncoder) -> Tensor:
    """Encode each prompted label sequence: (..., N, L, d) -> (..., N, C_T)."""
    return text_encoder(tokens, mask)


def classify(x: Tensor, label_features: Tensor, tau: Tensor | float) -> Tensor:
    """Softmax over labels of cosine(x, T_i) / tau.

    x: (..., C); label_features: (..., N, C). Returns (..., N).
    """
    xn = x.norm(dim=-1)
    tn = label_features.norm(dim=-1)
    if bool((xn == 0).any()) or bool((tn == 0).any()):
        raise DegenerateInputError("cosine similarity undefined for a zero-norm feature")
    cos = (label_features @ x.unsqueeze(-1)).squeeze(-1) / (tn * xn.unsqueeze(-1))
    return torch.softmax(cos / tau, dim=-1)


def category_feature(p: Tensor, label_features: Tensor) -> Tensor:
    """Probability-weighted sum of label features: (..., N), (..., N, C) -> (..., C)."""
    if p.shape[-1] != label_features.shape[-2]:
        raise ShapeError(f"{p.shape[-1]} probabilities for {label_features.shape[-2]} label features")
    return (p.unsqueeze(-1) * label_features).sum(dim=-2)


def attribute_feature(p: Tensor, label_features: Tensor) -> tuple[Tensor, Tensor]:
    """Feature of the most probable label; ties resolve to the lowest index."""
    if p.shape[-1] != label_features.shape[-2] or p.shape[-1] < 1:
        raise ShapeError("attribute probabilities and label features disagree")
    index = torch.argmax(p, dim=-1)
    gather = index[..., None, None].expand(*index.shape, 1, label_features.shape[-1])
    return torch.gather(label_features, -2, gather).squeeze(-2), index


@dataclass
class DescriptionBatch:
    """Per-kind label probabilities (B, N) and prompted label features (B, N, C_T)."""

    probs: dict[str, Tensor]
    label_features: dict[str, Tensor]

    def category(self) -> Tensor:
        return category_feature(self.probs["classes"], self.label_features["classes"])

    def attribute(self, kind: str) -> tuple[Tensor, Tensor]:
        return attribute_feature(self.probs[kind], self.label_features[kind])


@dataclass(frozen=True)
class TargetDescription:
    """Description of a single target patch."""

    probs: dict[str, Tensor]
    indices: dict[str, int]
    features: dict[str, Tensor]  # "classes" -> pooled T_c; attribute kind -> T_a
    label_features: dict[str, Tensor] = field(repr=False)
    source: str | None = None

    def labels(self, vocab: Vocabulary) -> dict[str, str]:
        return {kind: vocab.labels(kind)[i] for kind, i in self.indices.items()}

    def checksum(self) -> str:
        h = hashlib.sha256()
        for kind in KINDS:
            for table in (self.probs, self.features, self.label_features):
                h.update(np.ascontiguousarray(table[kind].detach().cpu().numpy()).tobytes())
            h.update(str(self.indices[kind]).encode())
        return h.hexdigest()

    def equals(self, other: "TargetDescription") -> bool:
        return self.checksum() == other.checksum()

    @classmethod
    def from_batch(cls, batch: DescriptionBatch, i: int = 0, source: str | None = None) -> "TargetDescription":
        probs, indices, feats, label_feats = {}, {}, {}, {}
        for kind in KINDS:
            p = batch.probs[kind][i].detach()
            lf = batch.label_features[kind][i].detach()
            probs[kind] = p
            label_feats[kind] = lf
            if kind == "classes":
                feats[kind] = category_feature(p, lf)
                indices[kind] = int(torch.argmax(p))
            else:
                f, idx = attribute_feature(p, lf)
                feats[kind] = f
                indices[kind] = int(idx)
        return cls(probs=probs, indices=indices, features=feats, label_features=label_feats, source=source)


class ConversionModel(nn.Module):
    """Image encoder + prompt context + text encoder over a fixed vocabulary.

    One prompt context is shared by all four vocabulary kinds; each kind gets
    its own softmax.
    """

    def __init__(self, cfg: ModelConfig, embeddings: dict[str, LabelEmbeddings]):
        super().__init__()
        self.image_encoder = ImageEncoder(cfg.template_size, cfg.d_img, patch=cfg.stride)
        self.text_encoder = TextEncoder(cfg.d_tok, cfg.c_text)
        self.context = PromptContext(cfg.num_prompts, cfg.d_img, cfg.d_tok, cfg.tau_init)
        self.kinds = KINDS
        for kind in KINDS:
            emb = embeddings[kind]
            if emb.dim != cfg.d_tok:
                raise ShapeError(f"label embeddings for {kind!r} have dim {emb.dim}, expected d_tok={cfg.d_tok}")
            tokens, mask = emb.padded()
            self.register_buffer(f"tokens_{kind}", torch.as_tensor(tokens, dtype=torch.float32))
            self.register_buffer(f"mask_{kind}", torch.as_tensor(mask))

    def label_tokens(self, kind: str) -> tuple[Tensor, Tensor]:
        return getattr(self, f"tokens_{kind}"), getattr(self, f"mask_{kind}")

    def forward(self, patches: Tensor) -> DescriptionBatch:
        x = self.image_encoder(patches)
        bias = meta_net_forward(x, self.context)
        tau = self.context.tau
        probs, feats = {}, {}
        for kind in self.kinds:
            tokens, mask = self.label_tokens(kind)
            seq, seq_mask = build_prompts(self.context.prompts, bias, tokens, mask)
            t = label_text_features(seq, seq_mask, self.text_encoder)
            probs[kind] = classify(x, t, tau)
            feats[kind] = t
        return DescriptionBatch(probs=probs, label_features=feats)


def describe(patch: Tensor, model: ConversionModel, source: str | None = None) -> TargetDescription:
    """Describe one patch given as (3, P, P) or (1, 3, P, P) with values in [0, 1]."""
    if patch.ndim == 3:
        patch = patch.unsqueeze(0)
    with torch.no_grad():
        batch = model(patch)
    return TargetDescription.from_batch(batch, 0, source=source)


__all__ = [
    "ATTRIBUTE_KINDS",
    "ConversionModel",
    "DegenerateInputError",
    "DescriptionBatch",
    "MetaNet",
    "PromptContext",
    "TargetDescription",
    "attribute_feature",
    "build_prompts",
    "category_feature",
    "classify",
    "describe",
    "label_text_features",
    "meta_net_forward",
]
