"""Toy encoders: image encoder, token-sequence text encoder and joint backbone.

They are deliberately small so the whole pipeline trains on a CPU, but keep
the information flow of the full-size model: the backbone attends jointly over
template and search tokens and returns a feature grid for the search region.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from citetrack.config import ModelConfig

WEIGHTS_FORMAT = "citetrack-weights"
WEIGHTS_VERSION = 1


class ShapeError(ValueError):
    pass


class WeightsError(ValueError):
    pass


def patchify(images: Tensor, patch: int) -> Tensor:
    """(B, 3, H, W) -> (B, H/p * W/p, 3 * p * p), row-major over the patch grid."""
    b, c, h, w = images.shape
    x = images.reshape(b, c, h // patch, patch, w // patch, patch)
    x = x.permute(0, 2, 4, 1, 3, 5)
    return x.reshape(b, (h // patch) * (w // patch), c * patch * patch)


def _check_images(images: Tensor, size: int, what: str) -> None:
    if images.ndim != 4 or images.shape[1] != 3 or images.shape[2:] != (size, size):
        raise ShapeError(f"{what} must have shape (B, 3, {size}, {size}), got {tuple(images.shape)}")


class ImageEncoder(nn.Module):
    """Patchify -> affine embed -> mean pool -> 2-layer perceptron."""

    def __init__(self, input_size: int, d_img: int, patch: int = 16):
        super().__init__()
        self.input_size = input_size
        self.patch = patch
        self.embed = nn.Linear(3 * patch * patch, d_img)
        self.mlp = nn.Sequential(nn.Linear(d_img, d_img), nn.ReLU(), nn.Linear(d_img, d_img))

    def forward(self, images: Tensor) -> Tensor:
        _check_images(images, self.input_size, "image encoder input")
        tokens = self.embed(patchify(images, self.patch))
        return self.mlp(tokens.mean(dim=1))


class TextEncoder(nn.Module):
    """Mean-pool the (masked) token sequence, then an affine map to C_T."""

    def __init__(self, d_tok: int, c_text: int):
        super().__init__()
        self.d_tok = d_tok
        self.proj = nn.Linear(d_tok, c_text)

    def forward(self, tokens: Tensor, mask: Tensor | None = None) -> Tensor:
        """tokens: (..., L, d_tok); mask: (..., L) bool, True for real tokens."""
        if tokens.shape[-1] != self.d_tok:
            raise ShapeError(f"token dimension {tokens.shape[-1]} != d_tok {self.d_tok}")
        if mask is None:
            pooled = tokens.mean(dim=-2)
        else:
            m = mask.to(tokens.dtype).unsqueeze(-1)
            pooled = (tokens * m).sum(dim=-2) / m.sum(dim=-2)
        return self.proj(pooled)


def encode_text_sequence(encoder: TextEncoder, tokens) -> Tensor:
    """Encode one token sequence given as an (L, d_tok) tensor or a list of vectors."""
    if isinstance(tokens, (list, tuple)):
        if len(tokens) == 0:
            raise ShapeError("token sequence is empty")
        dims = {int(torch.as_tensor(t).shape[-1]) for t in tokens}
        if len(dims) != 1:
            raise ShapeError(f"ragged token dimensions {sorted(dims)}")
        tokens = torch.stack([torch.as_tensor(t) for t in tokens])
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (L, d_tok) sequence, got {tuple(tokens.shape)}")
    return encoder(tokens)


class Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim))

    def forward(self, x: Tensor) -> Tensor:
        b, n, c = x.shape
        q, k, v = self.qkv(self.norm1(x)).reshape(b, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        attn = F.scaled_dot_product_attention(q, k, v)
        x = x + self.out(attn.transpose(1, 2).reshape(b, n, c))
        return x + self.mlp(self.norm2(x))


class JointBackbone(nn.Module):
    """Joint template/search feature extraction with self-attention over both token sets."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.template_size = cfg.template_size
        self.search_size = cfg.search_size
        self.stride = cfg.stride
        self.use_template = True
        c = cfg.channels
        self.patch_embed = nn.Conv2d(3, c, kernel_size=cfg.stride, stride=cfg.stride)
        n_t = (cfg.template_size // cfg.stride) ** 2
        n_s = cfg.feat_size ** 2
        self.pos_template = nn.Parameter(torch.randn(1, n_t, c) * 0.02)
        self.pos_search = nn.Parameter(torch.randn(1, n_s, c) * 0.02)
        self.blocks = nn.ModuleList([Block(c, cfg.num_heads) for _ in range(cfg.depth)])
        self.norm = nn.LayerNorm(c)

    def forward(self, template: Tensor, search: Tensor) -> Tensor:
        """Returns the search-region feature map as (B, C, H, W)."""
        _check_images(template, self.template_size, "template")
        _check_images(search, self.search_size, "search")
        s = self.patch_embed(search)
        b, c, h, w = s.shape
        s = s.flatten(2).transpose(1, 2) + self.pos_search
        if self.use_template:
            t = self.patch_embed(template).flatten(2).transpose(1, 2) + self.pos_template
            x = torch.cat([t, s], dim=1)
        else:
            x = s
        for blk in self.blocks:
            x = blk(x)
        x = self.norm(x[:, -h * w:])
        return x.transpose(1, 2).reshape(b, c, h, w)


def save_weights(model: nn.Module, cfg: ModelConfig, path: str | Path, extra: dict | None = None) -> None:
    payload = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "config": dataclasses.asdict(cfg),
        "state": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def read_weights(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise WeightsError(f"weights file not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise WeightsError(f"cannot read weights file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != WEIGHTS_FORMAT:
        raise WeightsError(f"{path} is not a {WEIGHTS_FORMAT} file")
    if payload.get("version") != WEIGHTS_VERSION:
        raise WeightsError(f"unsupported weights version {payload.get('version')} (expected {WEIGHTS_VERSION})")
    return payload


def load_state(model: nn.Module, cfg: ModelConfig, payload: dict) -> None:
    """Load a payload from :func:`read_weights` into ``model`` after checking dims."""
    saved = payload["config"]
    for key, value in dataclasses.asdict(cfg).items():
        if key in ("seed", "tau_init"):
            continue
        if saved.get(key) != value:
            raise ShapeError(f"weights were saved with {key}={saved.get(key)}, model has {key}={value}")
    own = model.state_dict()
    for key, tensor in payload["state"].items():
        if key not in own:
            raise ShapeError(f"unexpected parameter {key!r} in weights file")
        if own[key].shape != tensor.shape:
            raise ShapeError(f"shape mismatch for {key}: file {tuple(tensor.shape)} vs model {tuple(own[key].shape)}")
    model.load_state_dict(payload["state"])
