import dataclasses

import numpy as np
import pytest
import torch

from citetrack.config import ModelConfig
from citetrack.vocab import Vocabulary, default_vocabulary


def small_config(**kw) -> ModelConfig:
    base = dict(
        template_size=32, search_size=64, stride=16, d_img=16, d_tok=8, c_text=16,
        channels=8, num_prompts=2, depth=1, num_heads=2, seed=0,
    )
    base.update(kw)
    return ModelConfig(**base).validate()


@pytest.fixture
def small_cfg():
    return small_config()


@pytest.fixture(scope="session")
def vocab() -> Vocabulary:
    return default_vocabulary()


@pytest.fixture
def tiny_vocab() -> Vocabulary:
    return Vocabulary.from_dict({
        "classes": ["cat", "dog", "traffic light"],
        "color": ["red", "green", "blue"],
        "material": ["wood", "metal"],
        "texture": ["smooth", "rough"],
    })


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel_err(a: torch.Tensor, b: torch.Tensor) -> float:
    a, b = a.flatten().double(), b.flatten().double()
    denom = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / denom


def finite_diff(f, x: torch.Tensor, h: float = 1e-6) -> torch.Tensor:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (float64)."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    g = grad.view(-1)
    for i in range(flat.numel()):
        old = flat[i].item()
        flat[i] = old + h
        fp = float(f(x))
        flat[i] = old - h
        fm = float(f(x))
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return grad


def replace_cfg(cfg, **kw):
    return dataclasses.replace(cfg, **kw)
