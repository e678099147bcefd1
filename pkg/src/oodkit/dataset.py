"""Embedding datasets: on-disk format, domain splits, scaling, synthetic data.

A dataset directory holds:

* ``meta.json``        -- ``{"n": int, "d": int, "labels_vocab": [...], "source": str}``
* ``embeddings.f32``   -- little-endian IEEE-754 float32, row-major, exactly 4*n*d bytes
* ``labels.txt``       -- UTF-8, one label per line, n lines, LF endings
* ``splits.txt``       -- optional, one tag per line from {train, dev, test};
  absent means every row is "train"
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

VALID_SPLITS = ("train", "dev", "test")


class DatasetError(Exception):
    """Raised for malformed dataset directories or invalid dataset operations."""


@dataclass(frozen=True)
class EmbeddingDataset:
    """n x d sentence-embedding matrix with per-row intent labels and split tags."""

    embeddings: np.ndarray
    labels: tuple[str, ...]
    split: tuple[str, ...]

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float32)
        if emb.ndim != 2:
            raise DatasetError(f"embeddings must be 2-D, got shape {emb.shape}")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "split", tuple(self.split))
        n = emb.shape[0]
        if len(self.labels) != n:
            raise DatasetError(f"{len(self.labels)} labels for {n} rows")
        if len(self.split) != n:
            raise DatasetError(f"{len(self.split)} split tags for {n} rows")
        for tag in self.split:
            if tag not in VALID_SPLITS:
                raise DatasetError(f"unknown split tag {tag!r}")
        bad = np.argwhere(~np.isfinite(emb))
        if bad.size:
            r, c = bad[0]
            raise DatasetError(f"non-finite value at row {r}, column {c}")

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def vocab(self) -> tuple[str, ...]:
        """Label vocabulary in order of first appearance."""
        seen = dict.fromkeys(self.labels)
        return tuple(seen)

    def rows(self, mask: np.ndarray) -> "EmbeddingDataset":
        """Subset by boolean mask, preserving row order."""
        mask = np.asarray(mask, dtype=bool)
        idx = np.flatnonzero(mask)
        return EmbeddingDataset(
            self.embeddings[idx],
            tuple(self.labels[i] for i in idx),
            tuple(self.split[i] for i in idx),
        )

    def only_split(self, tag: str) -> "EmbeddingDataset":
        return self.rows(np.array([s == tag for s in self.split]))


@dataclass(frozen=True)
class SplitConfig:
    """Which intents are held out as out-of-domain."""

    ood_intents: frozenset[str]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ood_intents", frozenset(self.ood_intents))


@dataclass(frozen=True)
class ScalerStats:
    """Per-dimension min/max over the training rows."""

    per_dim_min: np.ndarray
    per_dim_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.per_dim_min, dtype=np.float32)
        hi = np.asarray(self.per_dim_max, dtype=np.float32)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DatasetError("scaler stats must be equal-length vectors")
        if np.any(lo > hi):
            raise DatasetError("per_dim_min exceeds per_dim_max")
        object.__setattr__(self, "per_dim_min", lo)
        object.__setattr__(self, "per_dim_max", hi)

    @property
    def dim(self) -> int:
        return self.per_dim_min.shape[0]


def load_dataset(path: str | Path) -> EmbeddingDataset:
    """Read a dataset directory, validating byte counts and row alignment."""
    path = Path(path)
    meta_path = path / "meta.json"
    emb_path = path / "embeddings.f32"
    labels_path = path / "labels.txt"
    for p in (meta_path, emb_path, labels_path):
        if not p.is_file():
            raise DatasetError(f"missing file: {p}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    n, d = int(meta["n"]), int(meta["d"])
    if n == 0:
        raise DatasetError("empty dataset")
    raw = emb_path.read_bytes()
    if len(raw) != 4 * n * d:
        raise DatasetError(
            f"embeddings.f32 holds {len(raw)} bytes, expected {4 * n * d} (n={n}, d={d})"
        )
    emb = np.frombuffer(raw, dtype="<f4").reshape(n, d)
    labels = labels_path.read_text(encoding="utf-8").split("\n")
    if labels and labels[-1] == "":
        labels = labels[:-1]
    if len(labels) != n:
        raise DatasetError(f"labels.txt has {len(labels)} lines, expected {n}")
    splits_path = path / "splits.txt"
    if splits_path.is_file():
        split = splits_path.read_text(encoding="utf-8").split("\n")
        if split and split[-1] == "":
            split = split[:-1]
        if len(split) != n:
            raise DatasetError(f"splits.txt has {len(split)} lines, expected {n}")
    else:
        split = ["train"] * n
    return EmbeddingDataset(emb, tuple(labels), tuple(split))


def write_dataset(ds: EmbeddingDataset, path: str | Path, source: str = "oodkit") -> None:
    """Write ``ds`` so that ``load_dataset`` reproduces it bit-exactly."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {"n": ds.n, "d": ds.dim, "labels_vocab": list(ds.vocab), "source": source}
    (path / "meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    arr = np.ascontiguousarray(ds.embeddings, dtype="<f4")
    (path / "embeddings.f32").write_bytes(arr.tobytes())
    (path / "labels.txt").write_text("\n".join(ds.labels) + "\n", encoding="utf-8")
    (path / "splits.txt").write_text("\n".join(ds.split) + "\n", encoding="utf-8")


def apply_split(
    ds: EmbeddingDataset, cfg: SplitConfig
) -> tuple[EmbeddingDataset, EmbeddingDataset]:
    """Partition rows into (in_domain, ood) by intent name, preserving order."""
    vocab = set(ds.vocab)
    if not cfg.ood_intents:
        raise DatasetError("ood_intents must be a non-empty strict subset of the vocabulary")
    unknown = cfg.ood_intents - vocab
    if unknown:
        raise DatasetError(f"unknown ood intents: {sorted(unknown)}")
    if cfg.ood_intents == vocab:
        raise DatasetError("ood_intents covers every label; no in-domain data remains")
    ood_mask = np.array([lab in cfg.ood_intents for lab in ds.labels])
    return ds.rows(~ood_mask), ds.rows(ood_mask)


def fit_scaler(train: EmbeddingDataset) -> ScalerStats:
    """Column-wise min/max over training rows only."""
    if train.n == 0:
        raise DatasetError("cannot fit scaler on an empty dataset")
    return ScalerStats(train.embeddings.min(axis=0), train.embeddings.max(axis=0))


def scale(ds: EmbeddingDataset, stats: ScalerStats) -> EmbeddingDataset:
    """Min-max map into [0,1]^d with clamping; constant dimensions map to 0."""
    if ds.dim != stats.dim:
        raise DatasetError(f"dim mismatch: dataset {ds.dim}, scaler {stats.dim}")
    lo = stats.per_dim_min.astype(np.float64)
    span = stats.per_dim_max.astype(np.float64) - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = (ds.embeddings.astype(np.float64) - lo) / safe
    scaled = np.where(span > 0, scaled, 0.0)
    scaled = np.clip(scaled, 0.0, 1.0)
    return EmbeddingDataset(scaled.astype(np.float32), ds.labels, ds.split)


def synth_generate(
    classes: int,
    per_class: int,
    dim: int,
    separation: float,
    noise_sigma: float,
    seed: int,
) -> EmbeddingDataset:
    """Gaussian blobs around pseudo-random unit directions scaled by ``separation``.

    Rows for class c are labelled ``synth_c``. Pure function of its arguments.
    """
    if classes < 1 or per_class < 1 or dim < 1:
        raise DatasetError("classes, per_class and dim must all be >= 1")
    if noise_sigma <= 0:
        raise DatasetError("noise_sigma must be > 0")
    rng = np.random.default_rng(seed)
    rows = np.empty((classes * per_class, dim), dtype=np.float64)
    labels = []
    for c in range(classes):
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        center = separation * direction
        noise = rng.standard_normal((per_class, dim)) * noise_sigma
        rows[c * per_class : (c + 1) * per_class] = center + noise
        labels.extend([f"synth_{c}"] * per_class)
    return EmbeddingDataset(rows.astype(np.float32), tuple(labels), ("train",) * len(labels))


def assign_splits(
    ds: EmbeddingDataset,
    train_frac: float = 0.7,
    dev_frac: float = 0.15,
    seed: int = 0,
) -> EmbeddingDataset:
    """Re-tag rows with train/dev/test splits, stratified per label.

    Rows of each label are shuffled deterministically; the first ``train_frac``
    share becomes train, the next ``dev_frac`` dev, the rest test.
    """
    if not (0 < train_frac < 1) or not (0 <= dev_frac < 1) or train_frac + dev_frac >= 1:
        raise DatasetError("split fractions must satisfy 0<train, 0<=dev, train+dev<1")
    rng = np.random.default_rng(seed)
    tags = [""] * ds.n
    for lab in ds.vocab:
        idx = [i for i, l in enumerate(ds.labels) if l == lab]
        order = rng.permutation(len(idx))
        n_train = max(1, int(round(train_frac * len(idx))))
        n_dev = max(1, int(round(dev_frac * len(idx)))) if dev_frac > 0 else 0
        for rank, j in enumerate(order):
            if rank < n_train:
                tags[idx[j]] = "train"
            elif rank < n_train + n_dev:
                tags[idx[j]] = "dev"
            else:
                tags[idx[j]] = "test"
    return EmbeddingDataset(ds.embeddings, ds.labels, tuple(tags))
