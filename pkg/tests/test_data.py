import numpy as np
import pytest

from wavepnn.data import (Dataset, IdxFormatError, LabelEmbedSpec, accuracy,
                          confusion_matrix, embed_label, embed_labels,
                          gen_vowel_dataset, load_dataset_csv, load_mnist_idx,
                          make_pos_neg_batch, save_dataset_csv)

from conftest import write_idx_images, write_idx_labels


class TestIdxLoading:
    def test_crop_one_gives_676(self, idx_pair):
        ip, lp, images, labels = idx_pair
        ds = load_mnist_idx(ip, lp, crop=1)
        assert ds.dim == 676 and ds.n_classes == 10
        assert np.array_equal(ds.labels, labels)

    def test_crop_zero_gives_784(self, idx_pair):
        ip, lp, *_ = idx_pair
        assert load_mnist_idx(ip, lp, crop=0).dim == 784

    def test_scaling_and_crop_content(self, idx_pair):
        ip, lp, images, _ = idx_pair
        ds = load_mnist_idx(ip, lp, crop=1)
        expected = images[0, 1:-1, 1:-1].reshape(-1) / 255.0
        assert np.array_equal(ds.x[0], expected)

    def test_all_zero_image_maps_to_zero_vector(self, idx_pair):
        ip, lp, *_ = idx_pair
        ds = load_mnist_idx(ip, lp, crop=1)
        assert not ds.x[2].any()

    def test_gzip_transparent(self, tmp_path, idx_pair):
        _, _, images, labels = idx_pair
        ip = tmp_path / "img.gz"
        lp = tmp_path / "lbl.gz"
        write_idx_images(ip, images, gz=True)
        write_idx_labels(lp, labels, gz=True)
        ds = load_mnist_idx(ip, lp)
        assert ds.dim == 676

    def test_bad_magic_rejected(self, tmp_path, idx_pair):
        _, lp, *_ = idx_pair
        bad = tmp_path / "bad.idx"
        bad.write_bytes(b"\x00\x00\x09\x99" + b"\x00" * 100)
        with pytest.raises(IdxFormatError, match="magic"):
            load_mnist_idx(bad, lp)

    def test_count_mismatch_rejected(self, tmp_path, idx_pair):
        ip, _, _, labels = idx_pair
        lp = tmp_path / "short.idx"
        write_idx_labels(lp, labels[:2])
        with pytest.raises(IdxFormatError, match="mismatch"):
            load_mnist_idx(ip, lp)

    def test_bad_crop_rejected(self, idx_pair):
        ip, lp, *_ = idx_pair
        with pytest.raises(ValueError):
            load_mnist_idx(ip, lp, crop=14)


class TestVowelDataset:
    def test_sigma_zero_is_scaled_template(self):
        train, _ = gen_vowel_dataset(4, 12, 40, 8, noise_sigma=0.0, seed=3)
        templates = np.random.default_rng(3).random((4, 12))
        for i in range(len(train)):
            t = templates[train.labels[i]]
            ratio = train.x[i][t > 1e-9] / t[t > 1e-9]
            assert ratio.std() < 1e-12
            assert 0.5 <= ratio[0] <= 1.0

    def test_sigma_zero_nearest_template_is_perfect(self):
        _, test = gen_vowel_dataset(6, 40, 100, 200, noise_sigma=0.0, seed=9)
        templates = np.random.default_rng(9).random((6, 40))
        tn = templates / np.linalg.norm(templates, axis=1, keepdims=True)
        xn = test.x / np.linalg.norm(test.x, axis=1, keepdims=True)
        preds = np.argmax(xn @ tn.T, axis=1)
        assert accuracy(preds, test.labels) == 1.0

    def test_deterministic(self):
        a = gen_vowel_dataset(6, 40, 50, 20, 0.3, seed=7)
        b = gen_vowel_dataset(6, 40, 50, 20, 0.3, seed=7)
        for x, y in zip(a, b):
            assert np.array_equal(x.x, y.x)
            assert np.array_equal(x.labels, y.labels)

    def test_noisy_task_ceiling_from_template_oracle(self):
        # brute-force cosine nearest-template classifier on the default task;
        # frozen value computed with this oracle (the task's ceiling)
        _, test = gen_vowel_dataset(6, 40, 2000, 500, 0.3, seed=7)
        templates = np.random.default_rng(7).random((6, 40))
        tn = templates / np.linalg.norm(templates, axis=1, keepdims=True)
        xn = test.x / np.linalg.norm(test.x, axis=1, keepdims=True)
        ceiling = accuracy(np.argmax(xn @ tn.T, axis=1), test.labels)
        assert ceiling == pytest.approx(0.998, abs=1e-12)

    def test_features_in_unit_interval_and_disjoint_splits(self):
        train, test = gen_vowel_dataset(6, 40, 60, 60, 0.4, seed=1)
        assert train.x.min() >= 0.0 and train.x.max() <= 1.0
        assert test.x.min() >= 0.0 and test.x.max() <= 1.0
        assert not (train.x[:, None] == test.x[None]).all(-1).any()

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            gen_vowel_dataset(10, 6, 10, 5)  # n_classes > dim
        with pytest.raises(ValueError):
            gen_vowel_dataset(1, 6, 10, 5)
        with pytest.raises(ValueError):
            gen_vowel_dataset(3, 6, 10, 5, noise_sigma=-0.1)


class TestEmbedding:
    def test_overwrite_example(self):
        spec = LabelEmbedSpec(n_classes=2)
        out = embed_label([0.2, 0.4, 0.6, 0.8], 1, spec)
        assert np.array_equal(out, [0.0, 1.0, 0.6, 0.8])

    def test_append_example(self):
        spec = LabelEmbedSpec(n_classes=3, mode="append")
        out = embed_label([0.1, 0.2, 0.3, 0.4], 0, spec)
        assert out.shape == (7,)
        assert np.array_equal(out[4:], [1.0, 0.0, 0.0])

    @pytest.mark.parametrize("mode", ["overwrite", "append"])
    def test_argmax_recovers_every_label(self, mode):
        c, d = 5, 9
        spec = LabelEmbedSpec(n_classes=c, slot_offset=2 if mode == "overwrite" else 0,
                              mode=mode)
        x = np.random.default_rng(0).random(d)
        for label in range(c):
            out = embed_label(x, label, spec)
            slots = out[2:2 + c] if mode == "overwrite" else out[d:]
            assert int(np.argmax(slots)) == label

    def test_overwrite_idempotent(self):
        spec = LabelEmbedSpec(n_classes=3, slot_offset=1)
        x = np.random.default_rng(1).random(8)
        once = embed_label(x, 2, spec)
        assert np.array_equal(embed_label(once, 2, spec), once)

    def test_label_out_of_range(self):
        spec = LabelEmbedSpec(n_classes=3)
        with pytest.raises(IndexError):
            embed_label(np.zeros(5), 3, spec)

    def test_overwrite_dim_constraint(self):
        spec = LabelEmbedSpec(n_classes=4, slot_offset=3)
        with pytest.raises(ValueError):
            embed_labels(np.zeros((2, 6)), np.zeros(2, dtype=int), spec)


class TestPosNegBatches:
    def _dataset(self, n, c, d, seed=0):
        rng = np.random.default_rng(seed)
        return Dataset(rng.random((n, d)), rng.integers(0, c, size=n), c)

    def test_two_classes_negative_is_other(self):
        ds = self._dataset(50, 2, 6)
        pn = make_pos_neg_batch(ds, LabelEmbedSpec(2), np.random.default_rng(0))
        neg = np.argmax(pn.x_neg[:, :2], axis=1)
        assert np.array_equal(neg, 1 - ds.labels)

    def test_never_true_label(self):
        ds = self._dataset(300, 7, 10, seed=2)
        spec = LabelEmbedSpec(7)
        for seed in range(5):
            pn = make_pos_neg_batch(ds, spec, np.random.default_rng(seed))
            neg = np.argmax(pn.x_neg[:, :7], axis=1)
            pos = np.argmax(pn.x_pos[:, :7], axis=1)
            assert np.array_equal(pos, ds.labels)
            assert not np.any(neg == ds.labels)

    def test_wrong_labels_uniform_within_5_sigma(self):
        n = 10_000
        ds = Dataset(np.random.default_rng(3).random((n, 12)),
                     np.zeros(n, dtype=int), 10)
        pn = make_pos_neg_batch(ds, LabelEmbedSpec(10), np.random.default_rng(11))
        neg = np.argmax(pn.x_neg[:, :10], axis=1)
        counts = np.bincount(neg, minlength=10)
        assert counts[0] == 0
        p = 1.0 / 9.0
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts[1:] - n * p) < 5 * sigma)

    def test_same_rng_seed_identical(self):
        ds = self._dataset(40, 5, 8, seed=4)
        spec = LabelEmbedSpec(5)
        a = make_pos_neg_batch(ds, spec, np.random.default_rng(9))
        b = make_pos_neg_batch(ds, spec, np.random.default_rng(9))
        assert np.array_equal(a.x_neg, b.x_neg)

    def test_resampled_between_calls(self):
        ds = self._dataset(200, 6, 8, seed=5)
        spec = LabelEmbedSpec(6)
        rng = np.random.default_rng(0)
        a = make_pos_neg_batch(ds, spec, rng)
        b = make_pos_neg_batch(ds, spec, rng)
        assert not np.array_equal(a.x_neg, b.x_neg)

    def test_single_class_rejected(self):
        ds = self._dataset(10, 1, 4)
        with pytest.raises(ValueError):
            make_pos_neg_batch(ds, LabelEmbedSpec(1), np.random.default_rng(0))

    def test_sample_list_input(self):
        ds = self._dataset(10, 3, 4)
        pn = make_pos_neg_batch([ds[i] for i in range(len(ds))],
                                LabelEmbedSpec(3), np.random.default_rng(1))
        assert pn.x_pos.shape == (10, 4)


class TestMetrics:
    def test_perfect_predictions(self):
        m = confusion_matrix([0, 1, 2], [0, 1, 2], 3)
        assert np.array_equal(m, np.eye(3, dtype=int))
        assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0

    def test_all_wrong(self):
        m = confusion_matrix([1, 2, 0], [0, 1, 2], 3)
        assert np.trace(m) == 0
        assert accuracy([1, 2, 0], [0, 1, 2]) == 0.0

    def test_hand_counted_case(self):
        preds = [0, 1, 2, 0]
        labels = [0, 1, 1, 2]
        m = confusion_matrix(preds, labels, 3)
        assert m[1, 1] == 1 and m[1, 2] == 1 and m[2, 0] == 1 and m[0, 0] == 1
        assert accuracy(preds, labels) == 0.5

    def test_row_sums_and_total(self):
        rng = np.random.default_rng(8)
        labels = rng.integers(0, 4, size=200)
        preds = rng.integers(0, 4, size=200)
        m = confusion_matrix(preds, labels, 4)
        assert np.array_equal(m.sum(axis=1), np.bincount(labels, minlength=4))
        assert m.sum() == 200

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            confusion_matrix([], [], 3)
        with pytest.raises(ValueError):
            accuracy([], [])


def test_csv_round_trip(tmp_path):
    train, _ = gen_vowel_dataset(3, 7, 25, 5, 0.2, seed=6)
    path = tmp_path / "ds.csv"
    save_dataset_csv(train, path)
    back = load_dataset_csv(path)
    assert back.n_classes == 3 and back.dim == 7
    assert np.array_equal(back.x, train.x)
    assert np.array_equal(back.labels, train.labels)
