"""Mean-pooled embedding + two-layer perceptron classifier.

The backbone deliberately stays small and smooth (tanh) so that every gradient
used downstream can be validated against central finite differences at 64-bit
precision. `embedding_override` lets callers substitute the embedding-layer
input, which path-integral attribution needs for its interpolation points.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import PAD_ID, Vocabulary
from .errors import ConfigError, ModelError

FORMAT_VERSION = 1

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64
    hidden_dim: int = 128
    num_classes: int = 2
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 5
    activation: str = "tanh"

    def validate(self) -> "ModelConfig":
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("embed_dim and hidden_dim must be >= 1")
        if self.num_classes != 2:
            raise ConfigError("only binary classification heads are supported")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("invalid optimizer settings")
        return self

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data).validate()


@dataclass
class ClassifierParams:
    """Trainable arrays. `embedding` row 0 is the pad vector and stays zero."""

    config: ModelConfig
    embedding: np.ndarray  # (V, d)
    w1: np.ndarray  # (H, d)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (C, H)
    b2: np.ndarray  # (C,)

    def trainable(self) -> dict[str, np.ndarray]:
        return {
            "embedding": self.embedding,
            "w1": self.w1,
            "b1": self.b1,
            "w2": self.w2,
            "b2": self.b2,
        }

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            config=self.config,
            embedding=self.embedding.copy(),
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
        )


@dataclass(frozen=True)
class PredictionOutput:
    logits: np.ndarray  # (C,)
    probs: np.ndarray  # (C,)
    representation: np.ndarray  # (H,) pooled hidden state before the head


def init_params(config: ModelConfig, vocab_size: int) -> ClassifierParams:
    """Seeded small-scale random initialization; pad embedding is zero."""
    config.validate()
    if vocab_size < 1:
        raise ConfigError("vocab_size must be >= 1")
    rng = np.random.default_rng(config.seed)
    embedding = rng.normal(0.0, 0.1, size=(vocab_size, config.embed_dim))
    embedding[PAD_ID] = 0.0
    w1 = rng.normal(0.0, 1.0 / np.sqrt(config.embed_dim), size=(config.hidden_dim, config.embed_dim))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(config.hidden_dim), size=(config.num_classes, config.hidden_dim))
    return ClassifierParams(
        config=config,
        embedding=embedding,
        w1=w1,
        b1=np.zeros(config.hidden_dim),
        w2=w2,
        b2=np.zeros(config.num_classes),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _activate(params: ClassifierParams, u: np.ndarray) -> np.ndarray:
    return np.tanh(u) if params.config.activation == "tanh" else u


def _activation_grad(params: ClassifierParams, h: np.ndarray) -> np.ndarray:
    return 1.0 - h * h if params.config.activation == "tanh" else np.ones_like(h)


def _forward_cache(
    params: ClassifierParams,
    token_ids: Sequence[int],
    embedding_override: np.ndarray | None = None,
) -> dict:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size == 0:
        raise ModelError("forward called on an empty token sequence")
    if ids.min() < 0 or ids.max() >= params.embedding.shape[0]:
        raise ModelError("token id out of range for the embedding table")
    if embedding_override is not None:
        x = np.asarray(embedding_override, dtype=np.float64)
        if x.shape != (ids.size, params.config.embed_dim):
            raise ModelError(
                f"embedding_override shape {x.shape} does not match "
                f"({ids.size}, {params.config.embed_dim})"
            )
    else:
        x = params.embedding[ids]
    pooled = x.mean(axis=0)
    u = params.w1 @ pooled + params.b1
    h = _activate(params, u)
    logits = params.w2 @ h + params.b2
    probs = softmax(logits)
    return {"ids": ids, "x": x, "pooled": pooled, "u": u, "h": h, "logits": logits, "probs": probs}


def forward(
    params: ClassifierParams,
    token_ids: Sequence[int],
    embedding_override: np.ndarray | None = None,
) -> PredictionOutput:
    cache = _forward_cache(params, token_ids, embedding_override)
    return PredictionOutput(logits=cache["logits"], probs=cache["probs"], representation=cache["h"])


def selector_value_and_grad(
    selector: str, logits: np.ndarray, probs: np.ndarray
) -> tuple[float, np.ndarray]:
    """Scalar functional of the output and its gradient with respect to logits.

    Supported forms: "pred_prob", "prob:<k>", "logit:<k>", "const".
    """
    kind, _, arg = selector.partition(":")
    n = logits.shape[0]
    if kind == "const":
        return 1.0, np.zeros(n)
    if kind == "pred_prob":
        k = int(np.argmax(probs))
    elif kind in ("prob", "logit"):
        try:
            k = int(arg)
        except ValueError:
            raise ConfigError(f"selector {selector!r}: expected an integer class index")
        if not 0 <= k < n:
            raise ConfigError(f"selector {selector!r}: class index out of range")
    else:
        raise ConfigError(f"unknown output selector {selector!r}")
    if kind == "logit":
        grad = np.zeros(n)
        grad[k] = 1.0
        return float(logits[k]), grad
    onehot = np.zeros(n)
    onehot[k] = 1.0
    return float(probs[k]), probs[k] * (onehot - probs)


def grad_wrt_embeddings(
    params: ClassifierParams,
    token_ids: Sequence[int],
    embedding_override: np.ndarray | None = None,
    output_selector: str = "pred_prob",
) -> np.ndarray:
    """Gradient of the selected scalar output with respect to each token embedding.

    Returns an (len, embed_dim) matrix. Mean pooling makes all rows equal; the
    shape is kept per-token so attributions can multiply by each token's input.
    """
    cache = _forward_cache(params, token_ids, embedding_override)
    _, dlogits = selector_value_and_grad(output_selector, cache["logits"], cache["probs"])
    dh = params.w2.T @ dlogits
    du = dh * _activation_grad(params, cache["h"])
    dpooled = params.w1.T @ du
    n = cache["ids"].size
    grad = np.tile(dpooled / n, (n, 1))
    if not np.all(np.isfinite(grad)):
        raise ModelError("non-finite gradient with respect to embeddings")
    return grad


def predict_batch(
    params: ClassifierParams, token_id_seqs: Sequence[Sequence[int]]
) -> list[PredictionOutput]:
    """Ordered per-sample forwards; bit-identical to calling forward() on each."""
    return [forward(params, ids) for ids in token_id_seqs]


def save_params(path: str | Path, params: ClassifierParams, vocab: Vocabulary) -> None:
    """Persist parameters plus the vocabulary they are tied to."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.BytesIO()
    np.savez(
        buffer,
        format_version=np.int64(FORMAT_VERSION),
        config_json=np.str_(json.dumps(params.config.to_dict(), sort_keys=True)),
        vocab_json=np.str_(json.dumps(vocab.to_dict(), sort_keys=True)),
        embedding=params.embedding,
        w1=params.w1,
        b1=params.b1,
        w2=params.w2,
        b2=params.b2,
    )
    path.write_bytes(buffer.getvalue())


def load_params(path: str | Path) -> tuple[ClassifierParams, Vocabulary]:
    path = Path(path)
    if not path.exists():
        raise ModelError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            version = int(data["format_version"])
            if version != FORMAT_VERSION:
                raise ModelError(f"{path}: unsupported checkpoint version {version}")
            config = ModelConfig.from_dict(json.loads(str(data["config_json"])))
            vocab = Vocabulary.from_dict(json.loads(str(data["vocab_json"])))
            params = ClassifierParams(
                config=config,
                embedding=np.array(data["embedding"], dtype=np.float64),
                w1=np.array(data["w1"], dtype=np.float64),
                b1=np.array(data["b1"], dtype=np.float64),
                w2=np.array(data["w2"], dtype=np.float64),
                b2=np.array(data["b2"], dtype=np.float64),
            )
    except ModelError:
        raise
    except Exception as exc:
        raise ModelError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc
    if params.embedding.shape[0] != len(vocab):
        raise ModelError(f"{path}: embedding rows do not match vocabulary size")
    return params, vocab


def with_config(params: ClassifierParams, **changes) -> ClassifierParams:
    """Copy of params with config fields replaced (arrays shared)."""
    return ClassifierParams(
        config=replace(params.config, **changes),
        embedding=params.embedding,
        w1=params.w1,
        b1=params.b1,
        w2=params.w2,
        b2=params.b2,
    )
