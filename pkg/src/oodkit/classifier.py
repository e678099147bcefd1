"""One-layer softmax intent classifier for rows routed as in-domain.

A single affine map on the sentence embedding followed by softmax; trained
with full-batch Adam on cross-entropy, keeping the best-dev-accuracy snapshot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import EmbeddingDataset

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ClassifierError(Exception):
    pass


@dataclass(frozen=True)
class ClassifierModel:
    weights: np.ndarray  # (d, |I|)
    bias: np.ndarray  # (|I|,)
    vocab: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if len(set(self.vocab)) != len(self.vocab):
            raise ClassifierError("vocabulary labels must be unique")
        if self.weights.shape[1] != len(self.vocab) or self.bias.shape != (len(self.vocab),):
            raise ClassifierError("weight/bias shapes do not match vocabulary size")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def train_classifier(
    train: EmbeddingDataset,
    dev: EmbeddingDataset,
    epochs: int = 300,
    learning_rate: float = 0.05,
    seed: int = 0,
) -> ClassifierModel:
    """Softmax cross-entropy via full-batch Adam, deterministic given seed.

    Returns the epoch snapshot with the highest dev accuracy (earliest on
    ties); with an empty dev set the final-epoch weights are returned.
    """
    if train.n == 0:
        raise ClassifierError("training set is empty")
    vocab = train.vocab
    k = len(vocab)
    index = {lab: i for i, lab in enumerate(vocab)}
    x = train.embeddings.astype(np.float64)
    targets = np.zeros((train.n, k))
    targets[np.arange(train.n), [index[lab] for lab in train.labels]] = 1.0

    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (train.dim + k))
    w = rng.uniform(-limit, limit, size=(train.dim, k))
    b = np.zeros(k)

    x_dev = dev.embeddings.astype(np.float64)
    dev_gold = np.array([index.get(lab, -1) for lab in dev.labels])

    m_w, v_w = np.zeros_like(w), np.zeros_like(w)
    m_b, v_b = np.zeros_like(b), np.zeros_like(b)
    best_acc = -1.0
    best = (w.copy(), b.copy())
    for step in range(1, epochs + 1):
        probs = _softmax(x @ w + b)
        gw = x.T @ (probs - targets) / train.n
        gb = (probs - targets).mean(axis=0)
        for p, g, m, v in ((w, gw, m_w, v_w), (b, gb, m_b, v_b)):
            m *= ADAM_BETA1
            m += (1 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1 - ADAM_BETA2) * g * g
            p -= learning_rate * (m / (1 - ADAM_BETA1**step)) / (
                np.sqrt(v / (1 - ADAM_BETA2**step)) + ADAM_EPS
            )
        if dev.n:
            pred = np.argmax(x_dev @ w + b, axis=1)
            acc = float((pred == dev_gold).mean())
            if acc > best_acc:
                best_acc = acc
                best = (w.copy(), b.copy())
        else:
            best = (w, b)
    return ClassifierModel(best[0], best[1], vocab)


def predict_intent(
    model: ClassifierModel, ds: EmbeddingDataset
) -> tuple[list[str], np.ndarray]:
    """Per-row intent names and the full softmax probability matrix.

    Argmax ties break toward the lowest vocabulary index.
    """
    if ds.dim != model.dim:
        raise ClassifierError(f"dim mismatch: dataset {ds.dim}, model {model.dim}")
    probs = _softmax(ds.embeddings.astype(np.float64) @ model.weights + model.bias)
    picks = np.argmax(probs, axis=1)  # np.argmax returns the first (lowest) index on ties
    return [model.vocab[i] for i in picks], probs


def save_classifier(model: ClassifierModel, directory: str | Path) -> None:
    """classifier.json (vocab, shapes) + classifier.f32 (weights then bias)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "vocab": list(model.vocab),
        "weights_shape": list(model.weights.shape),
        "bias_shape": list(model.bias.shape),
    }
    (directory / "classifier.json").write_text(
        json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    flat = np.concatenate(
        [model.weights.astype("<f4").ravel(), model.bias.astype("<f4").ravel()]
    )
    (directory / "classifier.f32").write_bytes(flat.tobytes())


def load_classifier(directory: str | Path) -> ClassifierModel:
    directory = Path(directory)
    meta = json.loads((directory / "classifier.json").read_text(encoding="utf-8"))
    raw = np.frombuffer((directory / "classifier.f32").read_bytes(), dtype="<f4")
    w_size = int(np.prod(meta["weights_shape"]))
    weights = raw[:w_size].astype(np.float64).reshape(meta["weights_shape"])
    bias = raw[w_size:].astype(np.float64).reshape(meta["bias_shape"])
    return ClassifierModel(weights, bias, tuple(meta["vocab"]))
