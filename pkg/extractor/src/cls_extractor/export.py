"""Dataset-directory writer, byte-compatible with the detection toolkit.

Layout (shared interface, no shared code):
  meta.json        {"n": int, "d": int, "labels_vocab": [...], "source": str}
  embeddings.f32   little-endian float32, row-major, exactly 4*n*d bytes
  labels.txt       UTF-8, one label per line, LF endings
  splits.txt       one of train/dev/test per line
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def write_embedding_dataset(
    path: str | Path,
    embeddings: np.ndarray,
    labels: list[str],
    splits: list[str],
    source: str,
) -> None:
    embeddings = np.ascontiguousarray(embeddings, dtype="<f4")
    n, d = embeddings.shape
    if len(labels) != n or len(splits) != n:
        raise ValueError(f"{n} rows but {len(labels)} labels / {len(splits)} splits")
    if not np.isfinite(embeddings).all():
        raise ValueError("non-finite embedding values")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    vocab = list(dict.fromkeys(labels))
    meta = {"n": n, "d": d, "labels_vocab": vocab, "source": source}
    (path / "meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    (path / "embeddings.f32").write_bytes(embeddings.tobytes())
    (path / "labels.txt").write_text("\n".join(labels) + "\n", encoding="utf-8")
    (path / "splits.txt").write_text("\n".join(splits) + "\n", encoding="utf-8")
