"""CLI: fine-tune an encoder on a corpus and export CLS embeddings."""

from __future__ import annotations

import argparse
import sys

from .corpus import CorpusError, known_corpora
from .finetune import ExtractorConfig, finetune_and_export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Fine-tune a transformer on in-domain intents and export CLS vectors",
    )
    parser.add_argument("--corpus", required=True, choices=known_corpora())
    parser.add_argument("--corpus-dir", required=True,
                        help="directory holding train.json/dev.json/test.json")
    parser.add_argument("--out", required=True, help="dataset directory to write")
    parser.add_argument("--model", default=None,
                        help="pretrained model identifier or local path (default per corpus)")
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--lr", type=float, default=2e-5)
    parser.add_argument("--max-length", type=int, default=64)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--expected-dim", type=int, default=768,
                        help="required encoder width; 0 disables the check")
    args = parser.parse_args(argv)

    cfg = ExtractorConfig(
        corpus=args.corpus,
        corpus_dir=args.corpus_dir,
        out=args.out,
        model=args.model,
        epochs=args.epochs,
        learning_rate=args.lr,
        max_length=args.max_length,
        batch_size=args.batch_size,
        seed=args.seed,
        device=args.device,
        expected_dim=args.expected_dim or None,
    )
    try:
        out = finetune_and_export(cfg)
    except CorpusError as e:
        print(f"extract: {e}", file=sys.stderr)
        return 1
    print(f"export written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
