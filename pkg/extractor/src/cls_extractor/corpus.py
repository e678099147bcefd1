"""Corpus registry and loading.

A corpus directory holds ``train.json``, ``dev.json`` and ``test.json``, each
a JSON list of ``{"text": str, "intent": str}`` records. The registry knows,
per corpus, which intents are held out as out-of-domain and which pretrained
encoder is the default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

SPLITS = ("train", "dev", "test")

# intents held out of fine-tuning, per corpus
OOD_INTENTS: dict[str, frozenset[str]] = {
    "atis": frozenset({"airline", "meal", "airfare", "day_name", "distance"}),
    "persian-atis": frozenset({"airline", "meal", "airfare", "day_name", "distance"}),
    "snips": frozenset({"GetWeather", "BookRestaurant"}),
}

DEFAULT_MODELS: dict[str, str] = {
    "atis": "bert-base-uncased",
    "snips": "bert-base-uncased",
    "persian-atis": "HooshvareLab/bert-base-parsbert-uncased",
}

# hidden width of the base encoders above; exports are checked against this
EXPECTED_HIDDEN = 768


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class Utterance:
    text: str
    intent: str
    split: str


def known_corpora() -> tuple[str, ...]:
    return tuple(sorted(OOD_INTENTS))


def ood_intents_for(corpus: str) -> frozenset[str]:
    if corpus not in OOD_INTENTS:
        raise CorpusError(f"unknown corpus {corpus!r}; known: {', '.join(known_corpora())}")
    return OOD_INTENTS[corpus]


def load_corpus(corpus: str, corpus_dir: str | Path) -> list[Utterance]:
    """Read all three split files, preserving row order within each split."""
    ood_intents_for(corpus)  # validates the name
    corpus_dir = Path(corpus_dir)
    rows: list[Utterance] = []
    for split in SPLITS:
        path = corpus_dir / f"{split}.json"
        if not path.is_file():
            raise CorpusError(f"missing corpus file: {path}")
        try:
            records = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CorpusError(f"cannot parse {path}: {e}") from e
        if not isinstance(records, list):
            raise CorpusError(f"{path} must hold a JSON list")
        for i, rec in enumerate(records):
            if "text" not in rec or "intent" not in rec:
                raise CorpusError(f"{path} record {i} lacks text/intent")
            rows.append(Utterance(str(rec["text"]), str(rec["intent"]), split))
    if not rows:
        raise CorpusError(f"corpus {corpus!r} at {corpus_dir} is empty")
    return rows


def in_domain_label_vocab(rows: list[Utterance], corpus: str) -> list[str]:
    """Fine-tuning vocabulary: in-domain intents in order of first appearance."""
    ood = ood_intents_for(corpus)
    seen: dict[str, None] = {}
    for r in rows:
        if r.intent not in ood:
            seen.setdefault(r.intent, None)
    if not seen:
        raise CorpusError("no in-domain rows; every intent is held out")
    return list(seen)
