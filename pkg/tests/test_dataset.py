import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oodkit.dataset import (
    DatasetError,
    EmbeddingDataset,
    ScalerStats,
    SplitConfig,
    apply_split,
    assign_splits,
    fit_scaler,
    load_dataset,
    scale,
    synth_generate,
    write_dataset,
)


def make_ds(emb, labels, split=None):
    emb = np.asarray(emb, dtype=np.float32)
    split = split or ["train"] * len(labels)
    return EmbeddingDataset(emb, tuple(labels), tuple(split))


class TestRoundTrip:
    def test_small_identity(self, tmp_path):
        ds = make_ds([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], ["a", "b"])
        write_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.n == 2 and back.dim == 3
        assert back.labels == ("a", "b")
        np.testing.assert_array_equal(back.embeddings, ds.embeddings)

    def test_bit_exact_floats(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = make_ds(rng.standard_normal((17, 9)), [f"l{i % 3}" for i in range(17)])
        write_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.embeddings.tobytes() == ds.embeddings.tobytes()
        assert back.labels == ds.labels
        assert back.split == ds.split

    def test_byte_count_768(self, tmp_path):
        ds = make_ds(np.zeros((5, 768), np.float32), list("abcde"))
        write_dataset(ds, tmp_path)
        assert (tmp_path / "embeddings.f32").stat().st_size == 4 * 5 * 768

    def test_unicode_labels(self, tmp_path):
        labels = ["پرواز", "غذا", "فاصله"]
        ds = make_ds(np.ones((3, 2), np.float32), labels)
        write_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.labels == tuple(labels)

    def test_missing_splits_means_train(self, tmp_path):
        ds = make_ds(np.ones((2, 2), np.float32), ["a", "b"], ["dev", "test"])
        write_dataset(ds, tmp_path)
        (tmp_path / "splits.txt").unlink()
        back = load_dataset(tmp_path)
        assert back.split == ("train", "train")


class TestLoadErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="missing file"):
            load_dataset(tmp_path)

    def test_empty_dataset(self, tmp_path):
        (tmp_path / "meta.json").write_text(json.dumps({"n": 0, "d": 3, "labels_vocab": [], "source": "t"}))
        (tmp_path / "embeddings.f32").write_bytes(b"")
        (tmp_path / "labels.txt").write_text("")
        with pytest.raises(DatasetError, match="empty dataset"):
            load_dataset(tmp_path)

    def test_byte_count_mismatch(self, tmp_path):
        (tmp_path / "meta.json").write_text(json.dumps({"n": 2, "d": 2, "labels_vocab": ["a"], "source": "t"}))
        (tmp_path / "embeddings.f32").write_bytes(b"\x00" * 12)  # 12 != 4*2*2
        (tmp_path / "labels.txt").write_text("a\na\n")
        with pytest.raises(DatasetError, match="expected 16"):
            load_dataset(tmp_path)

    def test_label_count_mismatch(self, tmp_path):
        (tmp_path / "meta.json").write_text(json.dumps({"n": 2, "d": 1, "labels_vocab": ["a"], "source": "t"}))
        (tmp_path / "embeddings.f32").write_bytes(b"\x00" * 8)
        (tmp_path / "labels.txt").write_text("a\n")
        with pytest.raises(DatasetError, match="labels.txt has 1"):
            load_dataset(tmp_path)

    def test_nan_names_row_and_column(self, tmp_path):
        # byte-level writer oracle: row 1, column 2 holds a NaN
        vals = [0.0, 1.0, 2.0, 3.0, 4.0, float("nan"), 6.0, 7.0]
        (tmp_path / "meta.json").write_text(json.dumps({"n": 2, "d": 4, "labels_vocab": ["a"], "source": "t"}))
        (tmp_path / "embeddings.f32").write_bytes(struct.pack("<8f", *vals))
        (tmp_path / "labels.txt").write_text("a\na\n")
        with pytest.raises(DatasetError, match="row 1, column 1"):
            load_dataset(tmp_path)


class TestApplySplit:
    def atis_like(self):
        intents = ["flight", "airline", "meal", "airfare", "day_name", "distance", "aircraft"]
        labels = [intents[i % len(intents)] for i in range(70)]
        return make_ds(np.arange(140, dtype=np.float32).reshape(70, 2), labels)

    def test_atis_table(self):
        ds = self.atis_like()
        ood_set = {"airline", "meal", "airfare", "day_name", "distance"}
        in_dom, ood = apply_split(ds, SplitConfig(frozenset(ood_set)))
        assert set(ood.labels) == ood_set
        assert set(in_dom.labels) == {"flight", "aircraft"}
        assert in_dom.n + ood.n == ds.n

    def test_snips_table(self):
        intents = ["AddToPlaylist", "GetWeather", "BookRestaurant", "PlayMusic", "RateBook"]
        ds = make_ds(np.zeros((10, 2), np.float32), [intents[i % 5] for i in range(10)])
        in_dom, ood = apply_split(ds, SplitConfig(frozenset({"GetWeather", "BookRestaurant"})))
        assert len(set(in_dom.labels)) == 3

    def test_empty_ood_set_rejected(self):
        with pytest.raises(DatasetError, match="non-empty"):
            apply_split(self.atis_like(), SplitConfig(frozenset()))

    def test_unknown_intent_rejected(self):
        with pytest.raises(DatasetError, match="unknown"):
            apply_split(self.atis_like(), SplitConfig(frozenset({"nope"})))

    def test_full_cover_rejected(self):
        ds = make_ds(np.zeros((4, 1), np.float32), ["a", "b", "a", "b"])
        with pytest.raises(DatasetError, match="every label"):
            apply_split(ds, SplitConfig(frozenset({"a", "b"})))

    def test_partition_preserves_order(self):
        ds = self.atis_like()
        in_dom, ood = apply_split(ds, SplitConfig(frozenset({"meal"})))
        merged = sorted(
            [tuple(r) for r in in_dom.embeddings] + [tuple(r) for r in ood.embeddings]
        )
        assert merged == sorted(tuple(r) for r in ds.embeddings)
        # relative order within each part
        idx = [i for i, l in enumerate(ds.labels) if l != "meal"]
        assert list(in_dom.labels) == [ds.labels[i] for i in idx]


class TestScaler:
    def test_single_row(self):
        ds = make_ds([[3.0, -1.0]], ["a"])
        st_ = fit_scaler(ds)
        np.testing.assert_array_equal(st_.per_dim_min, st_.per_dim_max)

    def test_two_rows(self):
        ds = make_ds([[0.0, 2.0], [2.0, 0.0]], ["a", "a"])
        st_ = fit_scaler(ds)
        np.testing.assert_array_equal(st_.per_dim_min, [0.0, 0.0])
        np.testing.assert_array_equal(st_.per_dim_max, [2.0, 2.0])

    def test_columnwise_scan_oracle(self):
        rng = np.random.default_rng(5)
        emb = rng.standard_normal((40, 7)).astype(np.float32)
        ds = make_ds(emb, ["x"] * 40)
        st_ = fit_scaler(ds)
        for j in range(7):  # independent per-column scan
            lo = min(float(emb[i, j]) for i in range(40))
            hi = max(float(emb[i, j]) for i in range(40))
            assert st_.per_dim_min[j] == np.float32(lo)
            assert st_.per_dim_max[j] == np.float32(hi)

    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            fit_scaler(make_ds(np.zeros((0, 2), np.float32), []))

    def test_scale_endpoints(self):
        st_ = ScalerStats(np.array([0.0, 1.0], np.float32), np.array([2.0, 5.0], np.float32))
        ds = make_ds([[0.0, 5.0], [2.0, 1.0]], ["a", "b"])
        out = scale(ds, st_).embeddings
        np.testing.assert_allclose(out, [[0.0, 1.0], [1.0, 0.0]])

    def test_constant_dimension_maps_to_zero(self):
        st_ = ScalerStats(np.array([3.0], np.float32), np.array([3.0], np.float32))
        out = scale(make_ds([[3.0], [7.0]], ["a", "b"]), st_).embeddings
        np.testing.assert_array_equal(out, [[0.0], [0.0]])

    def test_clamp(self):
        st_ = ScalerStats(np.array([0.0], np.float32), np.array([1.0], np.float32))
        out = scale(make_ds([[2.0], [-1.0]], ["a", "b"]), st_).embeddings
        np.testing.assert_array_equal(out, [[1.0], [0.0]])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_scale_always_in_unit_box(self, seed):
        rng = np.random.default_rng(seed)
        train = make_ds(rng.standard_normal((5, 3)).astype(np.float32), list("abcde"))
        other = make_ds((10 * rng.standard_normal((8, 3))).astype(np.float32), list("abcdefgh"))
        st_ = fit_scaler(train)
        out = scale(other, st_).embeddings
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestSynthGenerate:
    def test_deterministic(self):
        a = synth_generate(3, 5, 4, 2.0, 0.5, seed=9)
        b = synth_generate(3, 5, 4, 2.0, 0.5, seed=9)
        assert a.embeddings.tobytes() == b.embeddings.tobytes()
        assert a.labels == b.labels

    def test_zero_separation_centers_coincide(self):
        ds = synth_generate(3, 4, 6, 0.0, 1e-7, seed=1)
        np.testing.assert_allclose(ds.embeddings, 0.0, atol=1e-5)

    def test_nearest_centroid_oracle(self):
        ds = synth_generate(3, 50, 8, 10.0, 0.5, seed=2)
        emb = ds.embeddings.astype(np.float64)
        labels = np.array([int(l.split("_")[1]) for l in ds.labels])
        centroids = np.stack([emb[labels == c].mean(axis=0) for c in range(3)])
        nearest = np.argmin(((emb[:, None, :] - centroids[None]) ** 2).sum(-1), axis=1)
        assert (nearest == labels).all()

    def test_labels_and_counts(self):
        ds = synth_generate(2, 3, 4, 1.0, 0.1, seed=0)
        assert ds.labels == ("synth_0",) * 3 + ("synth_1",) * 3

    def test_invalid_args(self):
        with pytest.raises(DatasetError):
            synth_generate(0, 5, 4, 1.0, 0.5, seed=0)
        with pytest.raises(DatasetError):
            synth_generate(2, 5, 4, 1.0, 0.0, seed=0)


class TestAssignSplits:
    def test_partition_and_stratified(self):
        ds = synth_generate(3, 40, 4, 3.0, 0.5, seed=3)
        out = assign_splits(ds, 0.7, 0.15, seed=0)
        assert out.n == ds.n
        for lab in out.vocab:
            tags = {out.split[i] for i in range(out.n) if out.labels[i] == lab}
            assert tags == {"train", "dev", "test"}

    def test_invalid_fractions(self):
        ds = synth_generate(2, 4, 2, 1.0, 0.5, seed=0)
        with pytest.raises(DatasetError):
            assign_splits(ds, 0.9, 0.2, seed=0)


class TestInvariants:
    def test_row_count_mismatch_rejected(self):
        with pytest.raises(DatasetError):
            EmbeddingDataset(np.zeros((2, 2), np.float32), ("a",), ("train", "train"))

    def test_nonfinite_rejected(self):
        emb = np.array([[1.0, np.inf]], np.float32)
        with pytest.raises(DatasetError, match="row 0, column 1"):
            EmbeddingDataset(emb, ("a",), ("train",))

    def test_scaler_invariant(self):
        with pytest.raises(DatasetError):
            ScalerStats(np.array([1.0], np.float32), np.array([0.0], np.float32))
