"""Command-line entry point: split / train / calibrate / detect / discover /
evaluate / synth / report, all driven by a single JSON config."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import hdbscan as hdb
from . import kpca, vae
from .dataset import (
    DatasetError,
    apply_split,
    assign_splits,
    load_dataset,
    synth_generate,
    write_dataset,
)
from .pipeline import PipelineConfig, PipelineError, load_artifacts, run_eval, run_train


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out)
    return cfg


def cmd_synth(args) -> int:
    ds = synth_generate(
        classes=args.classes,
        per_class=args.per_class,
        dim=args.dim,
        separation=args.separation,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    ds = assign_splits(ds, args.train_frac, args.dev_frac, seed=args.seed)
    write_dataset(ds, args.out, source="synth")
    print(f"wrote {ds.n} rows ({args.classes} classes, dim {args.dim}) to {args.out}")
    return 0


def cmd_split(args) -> int:
    cfg = _load_config(args)
    ds = load_dataset(cfg.dataset)
    in_domain, ood = apply_split(ds, cfg.split)
    out = Path(args.out or cfg.out)
    write_dataset(in_domain, out / "in_domain", source="split")
    write_dataset(ood, out / "ood", source="split")
    print(f"in-domain rows: {in_domain.n}; ood rows: {ood.n}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    artifacts = run_train(cfg)
    best = artifacts.history[-1] if artifacts.history else None
    if best:
        print(
            f"trained {artifacts.history[-1].epoch} epochs; "
            f"final dev loss {best.dev_total:.4f}; threshold {artifacts.model.threshold:.4f}"
        )
    print(f"artifacts written to {cfg.out}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    model, _, _ = load_artifacts(cfg)
    ds = load_dataset(cfg.dataset)
    in_domain, _ = apply_split(ds, cfg.split)
    dev = in_domain.only_split("dev")
    model = vae.calibrate_threshold(model, dev, args.quantile)
    vae.save_model(model, cfg.out)
    print(f"threshold recalibrated to {model.threshold:.6f} (quantile {args.quantile})")
    return 0


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    model, _, _ = load_artifacts(cfg)
    ds = load_dataset(args.dataset or cfg.dataset)
    scores = vae.reconstruction_scores(model, ds)
    flagged = vae.detect_ood(model, ds)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["row_index,score,decision"]
    for i, (s, f) in enumerate(zip(scores, flagged)):
        lines.append(f"{i},{s:.9g},{'ood' if f else 'in_domain'}")
    (out / "detections.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{int(flagged.sum())}/{ds.n} rows flagged ood; detections.csv written")
    return 0


def cmd_discover(args) -> int:
    cfg = _load_config(args)
    model, _, best_cfg = load_artifacts(cfg)
    ds = load_dataset(args.dataset or cfg.dataset)
    flagged = vae.detect_ood(model, ds)
    rows = ds.embeddings[flagged].astype(np.float64)
    if rows.shape[0] < cfg.kpca.target_dim + 1:
        print("too few flagged rows for discovery", file=sys.stderr)
        return 1
    projector = kpca.fit(rows, cfg.kpca)
    projected = kpca.transform(projector, rows)
    assignment = hdb.fit_predict(projected, best_cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    idx = np.flatnonzero(flagged)
    lines = ["row_index,cluster_label"]
    for i, lab in zip(idx, assignment.labels):
        lines.append(f"{int(i)},{int(lab)}")
    (out / "assignments.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    plines = ["row_index," + ",".join(f"pc{j + 1}" for j in range(projected.shape[1]))]
    for i, row in zip(idx, projected):
        plines.append(f"{int(i)}," + ",".join(f"{x:.9g}" for x in row))
    (out / "projections.csv").write_text("\n".join(plines) + "\n", encoding="utf-8")
    print(f"discovered k={assignment.k} clusters over {rows.shape[0]} flagged rows")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = run_eval(cfg)
    r = out.report
    print(
        f"binary macro-F1 {r['macro_f1']:.4f}  micro-F1 {r['micro_f1']:.4f}  "
        f"AUC {r['auc']:.4f}  k={r['k_discovered']} (k*={r['k_star']})"
    )
    print(f"report written to {Path(cfg.out) / 'report.json'}")
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    path = Path(cfg.out) / "report.json"
    if not path.is_file():
        print(f"no report at {path}; run `oodkit evaluate` first", file=sys.stderr)
        return 1
    r = json.loads(path.read_text(encoding="utf-8"))
    print("OOD detection (binary):")
    print(f"  macro F1 {r['macro_f1']:.4f}   micro F1 {r['micro_f1']:.4f}   AUC {r['auc']:.4f}")
    print("OOD detection (multi-class):")
    print(f"  macro F1 {r['macro_f1_mc']:.4f}   micro F1 {r['micro_f1_mc']:.4f}")
    print("Intent discovery (gold-OOD rows):")
    print(f"  ACC {r['acc']:.4f}   NMI {r['nmi']:.4f}   ARI {r['ari']:.4f}")
    print(f"  discovered k = {r['k_discovered']}   ground truth k* = {r['k_star']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodkit",
        description="OOD intent detection and discovery over sentence embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic embedding dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--dev-frac", type=float, default=0.15)
    p.set_defaults(func=cmd_synth)

    for name, func, helptext in (
        ("split", cmd_split, "write in_domain/ and ood/ dataset directories"),
        ("train", cmd_train, "train VAE + classifier, tune clustering"),
        ("detect", cmd_detect, "score a dataset and write OOD decisions"),
        ("discover", cmd_discover, "project + cluster detector-flagged rows"),
        ("evaluate", cmd_evaluate, "full evaluation; writes report.json"),
        ("report", cmd_report, "pretty-print an existing report.json"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        if name in ("detect", "discover"):
            p.add_argument("--dataset", default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("calibrate", help="recalibrate the OOD threshold on dev rows")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--quantile", type=float, default=0.95)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as e:
        print(f"oodkit: {e}", file=sys.stderr)
        return 1
    except (DatasetError, vae.VaeError, kpca.KpcaError, hdb.HdbscanError) as e:
        print(f"oodkit: [{args.command}] {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
