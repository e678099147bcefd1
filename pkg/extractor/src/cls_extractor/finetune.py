"""Classifier-head fine-tuning and CLS vector export.

Fine-tunes a pretrained bidirectional encoder on in-domain training
utterances (held-out intents never enter training), keeps the
best-dev-accuracy checkpoint, then exports the CLS token of the last hidden
layer for every row of every split, including the held-out ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset
from transformers import AutoModelForSequenceClassification, AutoTokenizer

from .corpus import (
    CorpusError,
    DEFAULT_MODELS,
    EXPECTED_HIDDEN,
    Utterance,
    in_domain_label_vocab,
    load_corpus,
    ood_intents_for,
)
from .export import write_embedding_dataset


@dataclass(frozen=True)
class ExtractorConfig:
    corpus: str
    corpus_dir: str
    out: str
    model: str | None = None  # None resolves to the corpus default
    epochs: int = 3
    learning_rate: float = 2e-5
    max_length: int = 64
    batch_size: int = 16
    seed: int = 0
    device: str = "cpu"
    # base-encoder width the export must match; None skips the check
    expected_dim: int | None = EXPECTED_HIDDEN

    def resolved_model(self) -> str:
        if self.model is not None:
            return self.model
        if self.corpus not in DEFAULT_MODELS:
            raise CorpusError(f"no default model for corpus {self.corpus!r}")
        return DEFAULT_MODELS[self.corpus]


def _encode(tokenizer, texts: list[str], max_length: int):
    return tokenizer(
        texts,
        padding="max_length",
        truncation=True,
        max_length=max_length,
        return_tensors="pt",
    )


def _dev_accuracy(model, loader, device) -> float:
    model.eval()
    hits = total = 0
    with torch.no_grad():
        for input_ids, attention_mask, labels in loader:
            logits = model(
                input_ids=input_ids.to(device), attention_mask=attention_mask.to(device)
            ).logits
            hits += int((logits.argmax(dim=-1).cpu() == labels).sum())
            total += len(labels)
    return hits / total if total else 0.0


def finetune_and_export(cfg: ExtractorConfig) -> Path:
    """Run the full job; returns the written dataset directory."""
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)
    rows = load_corpus(cfg.corpus, cfg.corpus_dir)
    ood = ood_intents_for(cfg.corpus)
    vocab = in_domain_label_vocab(rows, cfg.corpus)
    label_index = {lab: i for i, lab in enumerate(vocab)}

    model_id = cfg.resolved_model()
    device = torch.device(cfg.device)
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModelForSequenceClassification.from_pretrained(
        model_id, num_labels=len(vocab)
    ).to(device)
    hidden = model.config.hidden_size
    if cfg.expected_dim is not None and hidden != cfg.expected_dim:
        raise CorpusError(
            f"encoder hidden size {hidden} != expected {cfg.expected_dim}; "
            "pass expected_dim=None to export anyway"
        )

    def loader_for(subset: list[Utterance], shuffle: bool) -> DataLoader:
        enc = _encode(tokenizer, [r.text for r in subset], cfg.max_length)
        labels = torch.tensor([label_index[r.intent] for r in subset])
        ds = TensorDataset(enc["input_ids"], enc["attention_mask"], labels)
        generator = torch.Generator().manual_seed(cfg.seed)
        return DataLoader(ds, batch_size=cfg.batch_size, shuffle=shuffle, generator=generator)

    train_rows = [r for r in rows if r.split == "train" and r.intent not in ood]
    dev_rows = [r for r in rows if r.split == "dev" and r.intent not in ood]
    if not train_rows:
        raise CorpusError("no in-domain training rows")
    train_loader = loader_for(train_rows, shuffle=True)
    dev_loader = loader_for(dev_rows, shuffle=False) if dev_rows else None

    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    best_acc = -1.0
    for _epoch in range(cfg.epochs):
        model.train()
        for input_ids, attention_mask, labels in train_loader:
            optimizer.zero_grad()
            out = model(
                input_ids=input_ids.to(device),
                attention_mask=attention_mask.to(device),
                labels=labels.to(device),
            )
            out.loss.backward()
            optimizer.step()
        if dev_loader is not None:
            acc = _dev_accuracy(model, dev_loader, device)
            if acc > best_acc:
                best_acc = acc
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    model.load_state_dict(best_state)

    # CLS of the last hidden layer, for every row of every split
    encoder = model.base_model
    encoder.eval()
    vectors = np.empty((len(rows), hidden), dtype=np.float32)
    with torch.no_grad():
        for start in range(0, len(rows), cfg.batch_size):
            chunk = rows[start : start + cfg.batch_size]
            enc = _encode(tokenizer, [r.text for r in chunk], cfg.max_length)
            hidden_states = encoder(
                input_ids=enc["input_ids"].to(device),
                attention_mask=enc["attention_mask"].to(device),
            ).last_hidden_state
            vectors[start : start + len(chunk)] = hidden_states[:, 0].cpu().numpy()

    out_dir = Path(cfg.out)
    write_embedding_dataset(
        out_dir,
        vectors,
        [r.intent for r in rows],
        [r.split for r in rows],
        source=f"{cfg.corpus}:{model_id}",
    )
    return out_dir
