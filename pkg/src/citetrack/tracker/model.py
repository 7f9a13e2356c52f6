from __future__ import annotations

import dataclasses
from pathlib import Path

import torch
from torch import Tensor, nn

from citetrack.config import ModelConfig
from citetrack.correlate import ProjectionParams, correlate
from citetrack.dyndesc import dynamic_features
from citetrack.encoders import JointBackbone, load_state, read_weights, save_weights
from citetrack.head import HeadOutputs, PredictionHead
from citetrack.textconv import ConversionModel, DescriptionBatch
from citetrack.vocab import ATTRIBUTE_KINDS, HashEmbedder, Vocabulary, default_vocabulary, embed_labels


class CiteTrackModel(nn.Module):
    """Text branch, joint visual backbone, text-image correlation and head."""

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.vocab = vocab
        embeddings = embed_labels(vocab, HashEmbedder(cfg.d_tok, seed=cfg.embed_seed))
        self.conversion = ConversionModel(cfg, embeddings)
        self.backbone = JointBackbone(cfg)
        self.projections = ProjectionParams(cfg.c_text, cfg.channels)
        self.head = PredictionHead(cfg.channels)

    def text_kernel_inputs(
        self, ref: DescriptionBatch, cur: DescriptionBatch, dynamic: bool = True
    ) -> tuple[Tensor, dict[str, Tensor], Tensor]:
        """Category feature from the reference; attribute features from the current patch.

        With ``dynamic=False`` the reference attributes are used as is, which is
        the same as reweighting with identical distributions.
        """
        src = cur if dynamic else ref
        attr = {k: src.attribute(k)[0] for k in ATTRIBUTE_KINDS}
        feats, weights = dynamic_features(ref.probs, src.probs, attr)
        return ref.category(), feats, weights

    def forward(
        self,
        template: Tensor,
        search: Tensor,
        current: Tensor | None = None,
        use_text: bool = True,
        dynamic: bool = True,
    ) -> tuple[HeadOutputs, dict]:
        v = self.backbone(template, search)
        extras: dict = {}
        if use_text:
            ref = self.conversion(template)
            cur = self.conversion(current) if (dynamic and current is not None) else ref
            t_c, feats, weights = self.text_kernel_inputs(ref, cur, dynamic)
            v = correlate(v, t_c, feats["color"], feats["material"], feats["texture"], self.projections)
            extras = {"reference": ref, "current": cur, "weights": weights}
        return self.head(v), extras


def build_model(cfg: ModelConfig | None = None, vocab: Vocabulary | None = None) -> CiteTrackModel:
    """Construct a model with weights drawn deterministically from ``cfg.seed``."""
    cfg = cfg or ModelConfig()
    vocab = vocab or default_vocabulary()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        return CiteTrackModel(cfg, vocab)


def save_model(model: CiteTrackModel, path: str | Path) -> None:
    save_weights(model, model.cfg, path, extra={"vocab": model.vocab.to_dict()})


def load_model(path: str | Path, vocab: Vocabulary | None = None, cfg: ModelConfig | None = None) -> CiteTrackModel:
    payload = read_weights(path)
    saved_cfg = ModelConfig(**payload["config"])
    cfg = cfg or saved_cfg
    if vocab is None:
        vocab = Vocabulary.from_dict(payload["extra"]["vocab"])
    model = build_model(dataclasses.replace(cfg), vocab)
    load_state(model, cfg, payload)
    model.eval()
    return model
