"""Model and run configuration.

Precedence when building a :class:`RunConfig`: dataclass defaults, then the
YAML/JSON config file, then ``CITETRACK_*`` environment variables, then
explicit overrides (CLI flags). Nested keys use a double underscore in the
environment, e.g. ``CITETRACK_MODEL__D_IMG=32``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

ENV_PREFIX = "CITETRACK_"


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    template_size: int = 192
    search_size: int = 384
    stride: int = 16
    d_img: int = 64
    d_tok: int = 32
    c_text: int = 64
    channels: int = 64
    num_prompts: int = 4
    tau_init: float = 0.07
    depth: int = 2
    num_heads: int = 4
    embed_seed: int = 0
    seed: int = 0

    def validate(self) -> "ModelConfig":
        for name in ("template_size", "search_size", "stride", "d_img", "d_tok", "c_text",
                     "channels", "num_prompts", "depth", "num_heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.search_size % self.stride or self.template_size % self.stride:
            raise ConfigError("template_size and search_size must be multiples of stride")
        if self.d_img != self.c_text:
            # cosine similarity between image and text features needs a shared space
            raise ConfigError("d_img must equal c_text")
        if self.d_img // 16 < 1:
            raise ConfigError("d_img must be >= 16 (Meta-Net hidden width is d_img // 16)")
        if self.channels % self.num_heads:
            raise ConfigError("channels must be divisible by num_heads")
        if self.channels < 8:
            raise ConfigError("channels must be >= 8 (head tapers by a factor of 8)")
        if self.tau_init <= 0:
            raise ConfigError("tau_init must be positive")
        return self

    @property
    def feat_size(self) -> int:
        return self.search_size // self.stride


@dataclass
class TrackerConfig:
    template_factor: float = 2.0
    search_factor: float = 4.0
    window: bool = True
    window_weight: float = 0.49
    use_text: bool = True
    dynamic: bool = True
    min_box_size: float = 4.0


@dataclass
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 8
    lr: float = 2e-3
    schedule: str = "cosine"  # decays to zero over the run; or "constant"
    weight_decay: float = 1e-4
    num_sequences: int = 20
    frames_per_sequence: int = 40
    max_gap: int = 20
    center_jitter: float = 0.5
    scale_jitter: float = 0.2
    prompt_weight: float = 1.0
    grad_clip: float = 1.0
    seed: int = 0


@dataclass
class RunConfig:
    weights: str | None = None
    vocab: str | None = None
    dataset: str | None = None
    format: str = "synth"
    out: str = "runs"
    seed: int = 0
    results: str | None = None
    synth_count: int = 5  # sequences generated when format is "synth"
    synth_seed: int = 1000  # disjoint from the training set seeds
    model: ModelConfig = field(default_factory=ModelConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _coerce(value: str, current: Any) -> Any:
    if isinstance(current, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def _apply(obj: Any, data: Mapping[str, Any], where: str) -> None:
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key {where}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {where}{key} must be a mapping")
            _apply(current, value, f"{where}{key}.")
        elif isinstance(value, str) and current is not None and not isinstance(current, str):
            setattr(obj, key, _coerce(value, current))
        else:
            setattr(obj, key, value)


def _env_overrides(environ: Mapping[str, str]) -> dict[str, Any]:
    tree: dict[str, Any] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].lower().split("__")
        node = tree
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return tree


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
        if data:
            _apply(cfg, data, "")
    _apply(cfg, _env_overrides(os.environ if environ is None else environ), "")
    if overrides:
        _apply(cfg, overrides, "")
    cfg.model.validate()
    return cfg
