import json
import os

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

TOY_VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "book", "flight", "weather", "restaurant", "play", "music", "from", "to",
    "the", "a", "what", "is", "time", "meal", "in", "city", "find", "me",
    "ticket", "airline", "ground", "service", "far", "day", "price",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A local, randomly initialized 16-wide BERT usable fully offline."""
    from transformers import BertConfig, BertModel

    d = tmp_path_factory.mktemp("tinybert")
    config = BertConfig(
        vocab_size=len(TOY_VOCAB),
        hidden_size=16,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(d)
    (d / "vocab.txt").write_text("\n".join(TOY_VOCAB) + "\n")
    return str(d)


def _records(pairs):
    return [{"text": t, "intent": i} for t, i in pairs]


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory):
    """ATIS-flavoured toy corpus; held-out intents appear in every split."""
    d = tmp_path_factory.mktemp("toyatis")
    train = _records(
        [("book me a flight", "flight")] * 6
        + [("ground service in the city", "ground_service")] * 6
        + [("what airline is the flight", "airline")] * 3
    )
    dev = _records(
        [("find me a flight ticket", "flight")] * 3
        + [("the ground service", "ground_service")] * 3
        + [("what is the meal", "meal")] * 2
    )
    test = _records(
        [("a flight from the city", "flight")] * 3
        + [("ground service", "ground_service")] * 3
        + [("what airline", "airline")] * 2
        + [("is a meal in the flight", "meal")] * 2
        + [("what is the price", "airfare")] * 2
        + [("what day is it", "day_name")] * 1
        + [("how far is the city", "distance")] * 1
    )
    for name, rows in (("train", train), ("dev", dev), ("test", test)):
        (d / f"{name}.json").write_text(json.dumps(rows, indent=1))
    return str(d)
