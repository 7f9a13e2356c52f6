"""Open vocabulary of object classes and attribute values.

The vocabulary file is YAML (or JSON) with exactly four arrays under the keys
``classes``, ``color``, ``material`` and ``texture``. List position defines the
label index used everywhere downstream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import yaml

ATTRIBUTE_KINDS = ("color", "material", "texture")
KINDS = ("classes",) + ATTRIBUTE_KINDS


class VocabularyError(ValueError):
    """Raised when a vocabulary file or label set is malformed."""


@dataclass(frozen=True)
class Vocabulary:
    classes: tuple[str, ...]
    attributes: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        if set(self.attributes) != set(ATTRIBUTE_KINDS):
            raise VocabularyError(
                f"attribute kinds must be exactly {list(ATTRIBUTE_KINDS)}, got {sorted(self.attributes)}"
            )
        for kind in KINDS:
            _check_labels(kind, self.labels(kind))

    def labels(self, kind: str) -> tuple[str, ...]:
        if kind == "classes":
            return self.classes
        try:
            return self.attributes[kind]
        except KeyError:
            raise VocabularyError(f"unknown vocabulary kind {kind!r}") from None

    def index(self, kind: str, label: str) -> int:
        return self.labels(kind).index(label)

    def sizes(self) -> dict[str, int]:
        return {kind: len(self.labels(kind)) for kind in KINDS}

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return all(self.labels(k) == other.labels(k) for k in KINDS)

    def __hash__(self):
        return hash(tuple(self.labels(k) for k in KINDS))

    def to_dict(self) -> dict[str, list[str]]:
        return {kind: list(self.labels(kind)) for kind in KINDS}

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[str]]) -> "Vocabulary":
        if not isinstance(data, Mapping):
            raise VocabularyError("vocabulary must be a mapping of kind -> label list")
        unknown = set(data) - set(KINDS)
        if unknown:
            raise VocabularyError(f"unknown attribute kind(s): {sorted(unknown)}")
        missing = set(KINDS) - set(data)
        if missing:
            raise VocabularyError(f"missing vocabulary section(s): {sorted(missing)}")
        for kind in KINDS:
            labels = data[kind]
            if not isinstance(labels, (list, tuple)) or not all(isinstance(s, str) for s in labels):
                raise VocabularyError(f"section {kind!r} must be a list of strings")
        return cls(
            classes=tuple(data["classes"]),
            attributes={k: tuple(data[k]) for k in ATTRIBUTE_KINDS},
        )


def _check_labels(kind: str, labels: Sequence[str]) -> None:
    if len(labels) == 0:
        raise VocabularyError(f"label list {kind!r} is empty")
    seen = set()
    for label in labels:
        if not label.strip():
            raise VocabularyError(f"blank label in {kind!r}")
        if label in seen:
            raise VocabularyError(f"duplicate label {label!r} in {kind!r}")
        seen.add(label)


def load_vocabulary(path: str | Path) -> Vocabulary:
    """Load a vocabulary file, preserving label order."""
    path = Path(path)
    if not path.is_file():
        raise VocabularyError(f"vocabulary file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise VocabularyError(f"cannot parse vocabulary file {path}: {exc}") from exc
    return Vocabulary.from_dict(data)


def default_vocabulary_path() -> Path:
    return Path(str(resources.files("citetrack") / "data" / "default_vocab.yaml"))


def default_vocabulary() -> Vocabulary:
    return load_vocabulary(default_vocabulary_path())


# A token embedder maps a label string to an (L, d_tok) array with L >= 1.
Embedder = Callable[[str], np.ndarray]


class HashEmbedder:
    """Deterministic word-level embedder.

    Each whitespace-separated word gets a fixed Gaussian vector seeded from a
    SHA-256 digest of ``(seed, word)``, so outputs are stable across processes.
    """

    def __init__(self, dim: int, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def _word(self, word: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{word}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.standard_normal(self.dim) / np.sqrt(self.dim)

    def __call__(self, label: str) -> np.ndarray:
        words = label.lower().split()
        if not words:
            raise VocabularyError(f"cannot embed blank label {label!r}")
        return np.stack([self._word(w) for w in words])


@dataclass(frozen=True)
class LabelEmbeddings:
    """Token embedding sequences for one vocabulary kind, in vocabulary order."""

    labels: tuple[str, ...]
    tokens: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.tokens[0].shape[1]

    def __len__(self):
        return len(self.labels)

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(N, L_max, d)`` zero-padded tokens and an ``(N, L_max)`` mask."""
        lmax = max(t.shape[0] for t in self.tokens)
        out = np.zeros((len(self.tokens), lmax, self.dim))
        mask = np.zeros((len(self.tokens), lmax), dtype=bool)
        for i, t in enumerate(self.tokens):
            out[i, : t.shape[0]] = t
            mask[i, : t.shape[0]] = True
        return out, mask


def embed_labels(vocab: Vocabulary, embedder: Embedder) -> dict[str, LabelEmbeddings]:
    result = {}
    for kind in KINDS:
        labels = vocab.labels(kind)
        tokens = []
        dim = None
        for label in labels:
            try:
                emb = np.asarray(embedder(label), dtype=np.float64)
            except Exception as exc:
                raise VocabularyError(f"embedder failed on label {label!r}: {exc}") from exc
            if emb.ndim != 2 or emb.shape[0] < 1:
                raise VocabularyError(
                    f"embedder returned shape {emb.shape} for label {label!r}; expected (L>=1, d)"
                )
            if dim is None:
                dim = emb.shape[1]
            elif emb.shape[1] != dim:
                raise VocabularyError(f"embedding dimension mismatch for label {label!r}")
            tokens.append(emb)
        result[kind] = LabelEmbeddings(labels=labels, tokens=tuple(tokens))
    return result
