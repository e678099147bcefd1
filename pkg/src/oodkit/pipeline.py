"""End-to-end orchestration: split, scale, train, calibrate, route, discover, evaluate.

Training fits everything on in-domain rows only. Evaluation scores the test
set (in-domain test rows plus every row of the held-out intents), routes each
row by the reconstruction-loss threshold, classifies the in-domain side, and
clusters the flagged side after projecting it to 2-D.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import hdbscan as hdb
from . import kpca
from . import metrics
from . import vae
from .dataset import (
    DatasetError,
    EmbeddingDataset,
    SplitConfig,
    apply_split,
    fit_scaler,
    load_dataset,
    scale,
)


class PipelineError(Exception):
    """Carries a [stage] tag so CLI failures point at the failing step."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class ClassifierSettings:
    epochs: int = 300
    learning_rate: float = 0.05
    seed: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str
    out: str
    split: SplitConfig
    vae: vae.VaeConfig = vae.VaeConfig()
    classifier: ClassifierSettings = ClassifierSettings()
    kpca: kpca.KernelConfig = kpca.KernelConfig()
    hdbscan_grid: tuple[hdb.HdbscanConfig, ...] | None = None
    threshold_quantile: float = 0.95
    seed: int = 0
    tune_max_rows: int = 1000

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "out": self.out,
            "seed": self.seed,
            "split": {"ood_intents": sorted(self.split.ood_intents), "seed": self.split.seed},
            "vae": {
                "encoder_hidden": list(self.vae.encoder_hidden),
                "latent_dim": self.vae.latent_dim,
                "epochs": self.vae.epochs,
                "batch_size": self.vae.batch_size,
                "learning_rate": self.vae.learning_rate,
                "seed": self.vae.seed,
                "early_stop_patience": self.vae.early_stop_patience,
                "kl_warmup_epochs": self.vae.kl_warmup_epochs,
            },
            "classifier": {
                "epochs": self.classifier.epochs,
                "learning_rate": self.classifier.learning_rate,
                "seed": self.classifier.seed,
            },
            "kpca": {
                "degree": self.kpca.degree,
                "gamma": self.kpca.gamma,
                "coef0": self.kpca.coef0,
                "target_dim": self.kpca.target_dim,
            },
            "hdbscan_grid": None
            if self.hdbscan_grid is None
            else [
                {
                    "min_samples": g.min_samples,
                    "min_cluster_size": g.min_cluster_size,
                    "cluster_selection_epsilon": g.cluster_selection_epsilon,
                }
                for g in self.hdbscan_grid
            ],
            "threshold_quantile": self.threshold_quantile,
            "tune_max_rows": self.tune_max_rows,
        }

    @staticmethod
    def from_dict(raw: dict) -> "PipelineConfig":
        split = SplitConfig(
            frozenset(raw["split"]["ood_intents"]), raw["split"].get("seed", 0)
        )
        vcfg = vae.VaeConfig(**raw.get("vae", {}))
        ccfg = ClassifierSettings(**raw.get("classifier", {}))
        kcfg = kpca.KernelConfig(**raw.get("kpca", {}))
        grid = raw.get("hdbscan_grid")
        grid_cfgs = (
            None if grid is None else tuple(hdb.HdbscanConfig(**g) for g in grid)
        )
        return PipelineConfig(
            dataset=raw["dataset"],
            out=raw["out"],
            split=split,
            vae=vcfg,
            classifier=ccfg,
            kpca=kcfg,
            hdbscan_grid=grid_cfgs,
            threshold_quantile=raw.get("threshold_quantile", 0.95),
            seed=raw.get("seed", 0),
            tune_max_rows=raw.get("tune_max_rows", 1000),
        )

    @staticmethod
    def from_json(path: str | Path) -> "PipelineConfig":
        return PipelineConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Override every seed in the config at once."""
        return replace(
            self,
            seed=seed,
            split=SplitConfig(self.split.ood_intents, seed),
            vae=replace(self.vae, seed=seed),
            classifier=replace(self.classifier, seed=seed + 1),
        )


@dataclass
class TrainArtifacts:
    model: vae.VaeModel
    intent_clf: clf.ClassifierModel
    hdbscan_cfg: hdb.HdbscanConfig
    tuning_table: list
    history: list[vae.EpochStats]


def _sha256(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _split_in_domain(ds: EmbeddingDataset, cfg: PipelineConfig):
    in_domain, ood = apply_split(ds, cfg.split)
    train = in_domain.only_split("train")
    dev = in_domain.only_split("dev")
    if train.n == 0:
        raise PipelineError("split", "no in-domain train rows after OOD removal")
    if dev.n == 0:
        raise PipelineError("split", "no in-domain dev rows after OOD removal")
    return in_domain, ood, train, dev


def run_train(cfg: PipelineConfig) -> TrainArtifacts:
    """Fit VAE, classifier and clustering hyperparameters on in-domain data only."""
    try:
        ds = load_dataset(cfg.dataset)
    except DatasetError as e:
        raise PipelineError("load", str(e)) from e
    try:
        in_domain, _ood, train_ds, dev_ds = _split_in_domain(ds, cfg)
    except DatasetError as e:
        raise PipelineError("split", str(e)) from e

    try:
        scaler = fit_scaler(train_ds)
        model = vae.init_model(cfg.vae, ds.dim, scaler)
        model, history = vae.train(
            model, scale(train_ds, scaler), scale(dev_ds, scaler), cfg.vae
        )
        model = vae.calibrate_threshold(model, dev_ds, cfg.threshold_quantile)
    except vae.VaeError as e:
        raise PipelineError("train-vae", str(e)) from e

    try:
        intent_clf = clf.train_classifier(
            train_ds,
            dev_ds,
            epochs=cfg.classifier.epochs,
            learning_rate=cfg.classifier.learning_rate,
            seed=cfg.classifier.seed,
        )
    except clf.ClassifierError as e:
        raise PipelineError("train-classifier", str(e)) from e

    try:
        rows = train_ds.embeddings.astype(np.float64)
        labels = list(train_ds.labels)
        if rows.shape[0] > cfg.tune_max_rows:
            rng = np.random.default_rng(cfg.seed)
            pick = np.sort(rng.choice(rows.shape[0], cfg.tune_max_rows, replace=False))
            rows = rows[pick]
            labels = [labels[i] for i in pick]
        projector = kpca.fit(rows, cfg.kpca)
        projected = kpca.transform(projector, rows)
        grid = list(cfg.hdbscan_grid) if cfg.hdbscan_grid is not None else None
        best_cfg, table = hdb.tune_hyperparams(projected, labels, grid)
    except (kpca.KpcaError, hdb.HdbscanError) as e:
        raise PipelineError("tune-hdbscan", str(e)) from e

    _write_train_artifacts(cfg, model, intent_clf, best_cfg, table, history)
    return TrainArtifacts(model, intent_clf, best_cfg, table, history)


def _write_train_artifacts(cfg, model, intent_clf, best_cfg, table, history):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    vae.save_model(model, out)
    clf.save_classifier(intent_clf, out)
    (out / "hdbscan.json").write_text(
        json.dumps(
            {
                "selected": {
                    "min_samples": best_cfg.min_samples,
                    "min_cluster_size": best_cfg.min_cluster_size,
                    "cluster_selection_epsilon": best_cfg.cluster_selection_epsilon,
                },
                "scores": [
                    {
                        "min_samples": c.min_samples,
                        "min_cluster_size": c.min_cluster_size,
                        "cluster_selection_epsilon": c.cluster_selection_epsilon,
                        "in_domain_ari": None if not np.isfinite(s) else round(float(s), 9),
                    }
                    for c, s in table
                ],
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    vae.write_history(out / "history.csv", history)
    dataset_dir = Path(cfg.dataset)
    inputs = {}
    for name in ("meta.json", "embeddings.f32", "labels.txt", "splits.txt"):
        p = dataset_dir / name
        if p.is_file():
            inputs[name] = _sha256(p)
    manifest = {
        "config": cfg.to_dict(),
        "seeds": {
            "pipeline": cfg.seed,
            "split": cfg.split.seed,
            "vae": cfg.vae.seed,
            "classifier": cfg.classifier.seed,
        },
        "inputs": inputs,
        "artifacts": [
            "model.json",
            "weights.f32",
            "classifier.json",
            "classifier.f32",
            "hdbscan.json",
            "history.csv",
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_artifacts(cfg: PipelineConfig):
    out = Path(cfg.out)
    try:
        model = vae.load_model(out)
        intent_clf = clf.load_classifier(out)
        raw = json.loads((out / "hdbscan.json").read_text(encoding="utf-8"))["selected"]
        best_cfg = hdb.HdbscanConfig(**raw)
    except (OSError, KeyError, ValueError) as e:
        raise PipelineError("load-artifacts", str(e)) from e
    return model, intent_clf, best_cfg


@dataclass
class EvalOutput:
    report: dict
    rows: list[dict]


def _discover(flagged_rows: np.ndarray, kcfg: kpca.KernelConfig, hcfg: hdb.HdbscanConfig):
    """Project detector-flagged rows to 2-D and cluster them (transductive)."""
    n_f = flagged_rows.shape[0]
    if n_f == 0:
        return np.zeros((0, kcfg.target_dim)), hdb.ClusterAssignment(np.empty(0, dtype=np.int64), 0)
    try:
        projector = kpca.fit(flagged_rows, kcfg)
        projected = kpca.transform(projector, flagged_rows)
    except kpca.KpcaError:
        return np.zeros((n_f, kcfg.target_dim)), hdb.ClusterAssignment(
            np.full(n_f, -1, dtype=np.int64), 0
        )
    try:
        assignment = hdb.fit_predict(projected, hcfg)
    except hdb.HdbscanError:
        assignment = hdb.ClusterAssignment(np.full(n_f, -1, dtype=np.int64), 0)
    return projected, assignment


def run_eval(cfg: PipelineConfig) -> EvalOutput:
    """Route every test row, evaluate detection, classification and discovery."""
    model, intent_clf, best_cfg = load_artifacts(cfg)
    try:
        ds = load_dataset(cfg.dataset)
    except DatasetError as e:
        raise PipelineError("load", str(e)) from e
    if ds.dim != model.dim:
        raise PipelineError("evaluate", f"dataset dim {ds.dim} != model dim {model.dim}")

    ood_intents = cfg.split.ood_intents
    eval_mask = np.array(
        [lab in ood_intents or sp == "test" for lab, sp in zip(ds.labels, ds.split)]
    )
    eval_idx = np.flatnonzero(eval_mask)
    eval_ds = ds.rows(eval_mask)
    if eval_ds.n == 0:
        raise PipelineError("evaluate", "no test rows to evaluate")

    scores = vae.reconstruction_scores(model, eval_ds)
    flagged = vae.detect_ood(model, eval_ds)
    gold_is_ood = np.array([lab in ood_intents for lab in eval_ds.labels])

    # classification of rows routed in-domain
    pred_names = np.empty(eval_ds.n, dtype=object)
    if (~flagged).any():
        kept = eval_ds.rows(~flagged)
        names, _probs = clf.predict_intent(intent_clf, kept)
        pred_names[~flagged] = names

    # discovery on rows routed out-of-domain
    flagged_rows = eval_ds.embeddings[flagged].astype(np.float64)
    projected, assignment = _discover(flagged_rows, cfg.kpca, best_cfg)

    cluster_of = np.full(eval_ds.n, -1, dtype=np.int64)
    cluster_of[np.flatnonzero(flagged)] = assignment.labels

    # binary and multi-class detection metrics
    if not gold_is_ood.any():
        raise PipelineError(
            "evaluate", "dataset holds no rows of the configured ood_intents"
        )
    gold_bin = ["ood" if g else "in_domain" for g in gold_is_ood]
    pred_bin = ["ood" if f else "in_domain" for f in flagged]
    macro_f1, micro_f1 = metrics.f1_scores(gold_bin, pred_bin)
    gold_mc = [lab if lab not in ood_intents else "ood" for lab in eval_ds.labels]
    pred_mc = ["ood" if flagged[i] else pred_names[i] for i in range(eval_ds.n)]
    macro_mc, micro_mc = metrics.f1_scores(gold_mc, pred_mc)
    auc, roc_points = metrics.roc_auc(scores, gold_is_ood)
    ood_recall = float(flagged[gold_is_ood].mean())

    # discovery metrics, gold-OOD view: missed OOD rows count as noise
    gold_rows = np.flatnonzero(gold_is_ood)
    gold_labels = [eval_ds.labels[i] for i in gold_rows]
    gold_view_pred = cluster_of[gold_rows].tolist()
    disc_gold = _discovery_metrics(gold_labels, gold_view_pred)
    # flagged view: everything that was clustered, against its true label
    flag_rows = np.flatnonzero(flagged)
    disc_flagged = (
        _discovery_metrics(
            [eval_ds.labels[i] for i in flag_rows], cluster_of[flag_rows].tolist()
        )
        if flag_rows.size
        else {"nmi": 0.0, "ari": 0.0, "acc": 0.0, "k": 0, "k_star": 0}
    )

    report = metrics.EvalReport(
        macro_f1=macro_f1,
        micro_f1=micro_f1,
        macro_f1_mc=macro_mc,
        micro_f1_mc=micro_mc,
        auc=auc,
        roc_points=tuple(roc_points),
        nmi=disc_gold["nmi"],
        ari=disc_gold["ari"],
        acc=disc_gold["acc"],
        k_discovered=assignment.k,
        k_star=len({lab for lab in eval_ds.labels if lab in ood_intents}),
    )
    report_dict = report.to_dict()
    report_dict["discovery_gold_ood"] = disc_gold
    report_dict["discovery_flagged"] = disc_flagged
    report_dict["threshold"] = model.threshold
    report_dict["ood_recall"] = ood_recall
    report_dict["n_eval_rows"] = int(eval_ds.n)
    report_dict["n_flagged"] = int(flagged.sum())

    rows = []
    for i in range(eval_ds.n):
        if flagged[i]:
            out_label = f"cluster_{cluster_of[i]}" if cluster_of[i] >= 0 else "noise"
        else:
            out_label = str(pred_names[i])
        rows.append(
            {
                "row_index": int(eval_idx[i]),
                "gold_label": eval_ds.labels[i],
                "split": eval_ds.split[i],
                "score": float(scores[i]),
                "route": "ood" if flagged[i] else "in_domain",
                "output_label": out_label,
            }
        )

    _write_eval_artifacts(cfg, report_dict, roc_points, rows, projected, assignment, eval_idx[flagged])
    return EvalOutput(report_dict, rows)


def _discovery_metrics(gold_labels: list[str], pred_clusters: list[int]) -> dict:
    if not gold_labels:
        return {"nmi": 0.0, "ari": 0.0, "acc": 0.0, "k": 0, "k_star": 0}
    singletons = hdb._noise_as_singletons(np.asarray(pred_clusters, dtype=np.int64)).tolist()
    k, k_star = metrics.k_report(pred_clusters, gold_labels)
    out = {
        "nmi": metrics.nmi(gold_labels, singletons),
        "ari": metrics.ari(gold_labels, singletons) if len(gold_labels) >= 2 else 0.0,
        "acc": metrics.clustering_accuracy(gold_labels, pred_clusters)[0],
        "k": k,
        "k_star": k_star,
    }
    return out


def _write_eval_artifacts(cfg, report_dict, roc_points, rows, projected, assignment, flagged_idx):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_report(out / "report.json", report_dict)
    metrics.write_roc(out / "roc.csv", roc_points)
    lines = ["row_index,cluster_label"]
    for idx, lab in zip(flagged_idx, assignment.labels):
        lines.append(f"{int(idx)},{int(lab)}")
    (out / "assignments.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    header = "row_index," + ",".join(f"pc{j + 1}" for j in range(projected.shape[1]))
    plines = [header]
    for idx, row in zip(flagged_idx, projected):
        plines.append(f"{int(idx)}," + ",".join(f"{x:.9g}" for x in row))
    (out / "projections.csv").write_text("\n".join(plines) + "\n", encoding="utf-8")
    rlines = ["row_index,gold_label,split,score,route,output_label"]
    for r in rows:
        rlines.append(
            f"{r['row_index']},{r['gold_label']},{r['split']},{r['score']:.9g},"
            f"{r['route']},{r['output_label']}"
        )
    (out / "rows.csv").write_text("\n".join(rlines) + "\n", encoding="utf-8")
