"""CLS embedding extractor: intent fine-tuning + dataset-directory export."""

from .corpus import (
    CorpusError,
    DEFAULT_MODELS,
    EXPECTED_HIDDEN,
    OOD_INTENTS,
    Utterance,
    in_domain_label_vocab,
    known_corpora,
    load_corpus,
    ood_intents_for,
)
from .export import write_embedding_dataset
from .finetune import ExtractorConfig, finetune_and_export

__all__ = [
    "CorpusError",
    "DEFAULT_MODELS",
    "EXPECTED_HIDDEN",
    "OOD_INTENTS",
    "Utterance",
    "ExtractorConfig",
    "finetune_and_export",
    "in_domain_label_vocab",
    "known_corpora",
    "load_corpus",
    "ood_intents_for",
    "write_embedding_dataset",
]

__version__ = "0.1.0"
