import hashlib
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from oodkit import cli, vae
from oodkit.dataset import SplitConfig, assign_splits, load_dataset, synth_generate, write_dataset
from oodkit.hdbscan import HdbscanConfig
from oodkit.kpca import KernelConfig
from oodkit.pipeline import (
    ClassifierSettings,
    PipelineConfig,
    PipelineError,
    run_eval,
    run_train,
)
from oodkit.vae import VaeConfig


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    ds = synth_generate(4, 60, 16, 8.0, 0.8, seed=3)
    ds = assign_splits(ds, 0.7, 0.15, seed=3)
    write_dataset(ds, root / "data")
    cfg = PipelineConfig(
        dataset=str(root / "data"),
        out=str(root / "out"),
        split=SplitConfig(frozenset({"synth_3"}), seed=3),
        vae=VaeConfig(
            encoder_hidden=(32, 16), latent_dim=8, epochs=60, batch_size=16,
            learning_rate=2e-3, seed=3, early_stop_patience=60, kl_warmup_epochs=20,
        ),
        classifier=ClassifierSettings(epochs=150, learning_rate=0.05, seed=4),
        kpca=KernelConfig(),
        hdbscan_grid=(
            HdbscanConfig(min_samples=5, min_cluster_size=10),
            HdbscanConfig(min_samples=5, min_cluster_size=25),
        ),
        threshold_quantile=0.95,
        seed=3,
    )
    (root / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    artifacts = run_train(cfg)
    return root, cfg, artifacts


class TestRunTrain:
    def test_artifacts_on_disk(self, workspace):
        root, cfg, _ = workspace
        for name in (
            "model.json", "weights.f32", "classifier.json", "classifier.f32",
            "hdbscan.json", "history.csv", "manifest.json",
        ):
            assert (Path(cfg.out) / name).is_file(), name

    def test_reruns_byte_identical(self, workspace):
        root, cfg, _ = workspace
        cfg2 = replace(cfg, out=str(root / "out_rerun"))
        run_train(cfg2)
        for name in ("model.json", "weights.f32", "classifier.f32", "hdbscan.json", "history.csv"):
            a = hashlib.sha256((Path(cfg.out) / name).read_bytes()).hexdigest()
            b = hashlib.sha256((Path(cfg2.out) / name).read_bytes()).hexdigest()
            assert a == b, name

    def test_manifest_records_seeds_and_hashes(self, workspace):
        root, cfg, _ = workspace
        manifest = json.loads((Path(cfg.out) / "manifest.json").read_text())
        assert manifest["seeds"]["vae"] == 3
        assert set(manifest["inputs"]) == {"meta.json", "embeddings.f32", "labels.txt", "splits.txt"}
        for digest in manifest["inputs"].values():
            assert digest.startswith("sha256:")

    def test_all_classes_ood_rejected(self, workspace):
        root, cfg, _ = workspace
        bad = replace(cfg, split=SplitConfig(frozenset({f"synth_{i}" for i in range(4)})))
        with pytest.raises(PipelineError, match="no in-domain data|every label"):
            run_train(bad)

    def test_ood_never_seen_in_training(self, workspace):
        # the trained classifier vocabulary cannot contain the held-out intent
        _, cfg, artifacts = workspace
        assert "synth_3" not in artifacts.intent_clf.vocab


@pytest.fixture(scope="module")
def evaluated(workspace):
    root, cfg, _ = workspace
    return cfg, run_eval(cfg)


class TestRunEval:
    def test_outputs_on_disk(self, evaluated):
        cfg, _ = evaluated
        for name in ("report.json", "roc.csv", "assignments.csv", "projections.csv", "rows.csv"):
            assert (Path(cfg.out) / name).is_file(), name

    def test_routing_is_a_partition(self, evaluated):
        cfg, out = evaluated
        assert all(r["route"] in ("in_domain", "ood") for r in out.rows)
        assert all(r["output_label"] for r in out.rows)
        report = out.report
        assert report["n_eval_rows"] == len(out.rows)

    def test_one_output_label_per_row(self, evaluated):
        cfg, out = evaluated
        lines = (Path(cfg.out) / "rows.csv").read_text().strip().split("\n")
        assert len(lines) == len(out.rows) + 1
        seen = [int(line.split(",")[0]) for line in lines[1:]]
        assert len(seen) == len(set(seen))

    def test_report_fields_populated(self, evaluated):
        _, out = evaluated
        r = out.report
        for key in ("macro_f1", "micro_f1", "macro_f1_mc", "micro_f1_mc", "auc",
                    "nmi", "ari", "acc", "k_discovered", "k_star", "roc_points",
                    "discovery_gold_ood", "discovery_flagged", "threshold"):
            assert key in r
        assert 0.0 <= r["auc"] <= 1.0
        assert r["k_star"] == 1

    def test_infinite_threshold_sends_nothing_to_discovery(self, workspace):
        root, cfg, _ = workspace
        inf_out = str(root / "out_inf")
        import shutil

        shutil.copytree(cfg.out, inf_out)
        model = vae.load_model(inf_out)
        vae.save_model(replace(model, threshold=math.inf), inf_out)
        cfg_inf = replace(cfg, out=inf_out)
        out = run_eval(cfg_inf)
        assert out.report["n_flagged"] == 0
        assert all(r["route"] == "in_domain" for r in out.rows)
        assert out.report["k_discovered"] == 0

    def test_dimension_mismatch_rejected(self, workspace, tmp_path):
        root, cfg, _ = workspace
        other = synth_generate(2, 10, 5, 4.0, 0.5, seed=1)
        write_dataset(other, tmp_path / "wrong")
        bad = replace(cfg, dataset=str(tmp_path / "wrong"))
        with pytest.raises(PipelineError, match="dim"):
            run_eval(bad)


class TestCli:
    def test_synth_and_split(self, tmp_path):
        assert cli.main([
            "synth", "--out", str(tmp_path / "d"), "--classes", "3", "--per-class", "12",
            "--dim", "6", "--separation", "6", "--noise-sigma", "0.5", "--seed", "1",
        ]) == 0
        ds = load_dataset(tmp_path / "d")
        assert ds.n == 36
        cfg = {
            "dataset": str(tmp_path / "d"),
            "out": str(tmp_path / "parts"),
            "split": {"ood_intents": ["synth_2"], "seed": 1},
        }
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        assert cli.main(["split", "--config", str(tmp_path / "cfg.json")]) == 0
        assert load_dataset(tmp_path / "parts" / "ood").vocab == ("synth_2",)

    def test_full_cli_flow(self, workspace):
        root, cfg, _ = workspace
        config_path = str(root / "config.json")
        assert cli.main(["evaluate", "--config", config_path]) == 0
        assert cli.main(["report", "--config", config_path]) == 0
        assert cli.main(["detect", "--config", config_path]) == 0
        assert (Path(cfg.out) / "detections.csv").is_file()
        assert cli.main(["discover", "--config", config_path]) == 0

    def test_calibrate_updates_threshold(self, workspace):
        root, cfg, _ = workspace
        before = vae.load_model(cfg.out).threshold
        assert cli.main([
            "calibrate", "--config", str(root / "config.json"), "--quantile", "0.5",
        ]) == 0
        after = vae.load_model(cfg.out).threshold
        assert after < before
        # restore for other tests
        cli.main(["calibrate", "--config", str(root / "config.json"), "--quantile", "0.95"])

    def test_failure_is_stage_tagged(self, tmp_path, capsys):
        cfg = {
            "dataset": str(tmp_path / "missing"),
            "out": str(tmp_path / "out"),
            "split": {"ood_intents": ["x"], "seed": 0},
        }
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        assert cli.main(["train", "--config", str(tmp_path / "cfg.json")]) == 1
        err = capsys.readouterr().err
        assert "[load]" in err

    def test_config_round_trip(self, workspace):
        root, cfg, _ = workspace
        parsed = PipelineConfig.from_json(root / "config.json")
        assert parsed.to_dict() == cfg.to_dict()

    def test_seed_override(self, workspace):
        root, cfg, _ = workspace
        parsed = PipelineConfig.from_json(root / "config.json").with_seed(99)
        assert parsed.vae.seed == 99 and parsed.seed == 99


def test_eval_without_ood_rows_is_stage_tagged(workspace, tmp_path):
    root, cfg, _ = workspace
    only_id = synth_generate(3, 10, 16, 8.0, 0.8, seed=5)  # no synth_3 rows
    only_id = assign_splits(only_id, 0.7, 0.15, seed=5)
    write_dataset(only_id, tmp_path / "no_ood")
    bad = replace(cfg, dataset=str(tmp_path / "no_ood"))
    with pytest.raises(PipelineError, match=r"\[evaluate\].*ood_intents"):
        run_eval(bad)
