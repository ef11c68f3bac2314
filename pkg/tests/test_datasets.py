import numpy as np
import pytest

from sparsemia import datasets
from sparsemia.nn import TrainConfig, models, train


class TestSynthetic:
    def test_blobs_zero_noise_linearly_separable(self):
        data = datasets.make_synthetic("blobs", 300, 4, noise=0.0, seed=0)
        # linear probe: nearest class center classifies perfectly
        angles = 2 * np.pi * np.arange(4) / 4
        centers = 5.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        pred = np.argmin(
            ((data.inputs[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1
        )
        assert np.array_equal(pred, data.labels)

    def test_same_seed_identical(self):
        a = datasets.make_synthetic("spirals", 200, 3, noise=0.1, seed=5)
        b = datasets.make_synthetic("spirals", 200, 3, noise=0.1, seed=5)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_spirals_learnable_by_two_hidden_net(self):
        data = datasets.make_synthetic("spirals", 2000, 2, noise=0.05, seed=1)
        cut = 1600
        train_set = data.subset(np.arange(cut))
        test_set = data.subset(np.arange(cut, 2000))
        net = models.mlp(2, [64, 64], 2, rng=np.random.default_rng(0))
        cfg = TrainConfig(epochs=60, batch_size=64, initial_lr=0.1, seed=0)
        model = train(net, train_set, test_set, cfg)
        assert model.best_val_accuracy >= 90.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            datasets.make_synthetic("moons", 10, 2)


class TestNormalize:
    def test_normalizes_and_flags(self):
        data = datasets.make_synthetic("blobs", 500, 3, noise=1.0, seed=2)
        normed = datasets.normalize(data)
        np.testing.assert_allclose(normed.inputs.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(normed.inputs.std(axis=0), 1.0, atol=1e-12)
        assert normed.normalization["applied"]

    def test_double_normalization_impossible(self):
        data = datasets.make_synthetic("blobs", 100, 3, noise=1.0, seed=3)
        normed = datasets.normalize(data)
        with pytest.raises(ValueError, match="already normalized"):
            datasets.normalize(normed)

    def test_subset_keeps_normalization_metadata(self):
        data = datasets.normalize(datasets.make_synthetic("blobs", 100, 3, seed=4))
        sub = data.subset(np.arange(10))
        assert sub.normalization["applied"]


class TestAugment:
    def _images(self, n=6, seed=0):
        rng = np.random.default_rng(seed)
        return rng.standard_normal((n, 3, 8, 8)), rng

    def test_double_flip_restores_image(self):
        x, _ = self._images(1)
        flipped = x[:, :, :, ::-1]
        np.testing.assert_array_equal(flipped[:, :, :, ::-1], x)

    def test_center_crop_offset_recovers_original(self):
        x, _ = self._images(1)
        pad = 4
        padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        crop = padded[:, :, pad:pad + 8, pad:pad + 8]
        np.testing.assert_array_equal(crop, x)

    def test_output_shape_preserved(self):
        x, rng = self._images(16)
        out = datasets.augment(x, rng)
        assert out.shape == x.shape

    def test_labels_never_touched(self):
        # augment operates on inputs only; shape preservation is the contract
        x, rng = self._images(4)
        out = datasets.augment(x, rng)
        assert out.shape == x.shape
        assert out.dtype == x.dtype

    def test_non_image_passthrough_with_warning(self):
        rng = np.random.default_rng(1)
        flat = rng.standard_normal((5, 2))
        with pytest.warns(UserWarning, match="non-image"):
            out = datasets.augment(flat, rng)
        np.testing.assert_array_equal(out, flat)

    def test_deterministic_given_rng(self):
        x, _ = self._images(8, seed=2)
        out1 = datasets.augment(x, np.random.default_rng(7))
        out2 = datasets.augment(x, np.random.default_rng(7))
        np.testing.assert_array_equal(out1, out2)


class TestImageContainer:
    def _dataset(self, n=2, seed=0):
        rng = np.random.default_rng(seed)
        return datasets.LabeledDataset(
            rng.standard_normal((n, 3, 4, 4)), rng.integers(0, 5, size=n), 5
        )

    def test_roundtrip_bitwise(self, tmp_path):
        data = self._dataset(7, seed=1)
        path = tmp_path / "imgs.bin"
        datasets.write_image_dataset(data, path)
        back = datasets.load_image_dataset(path)
        np.testing.assert_array_equal(back.inputs, data.inputs)
        np.testing.assert_array_equal(back.labels, data.labels)
        assert back.class_count == 5

    def test_two_image_file(self, tmp_path):
        data = self._dataset(2)
        path = tmp_path / "two.bin"
        datasets.write_image_dataset(data, path)
        assert len(datasets.load_image_dataset(path)) == 2

    def test_corrupt_header(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"WHAT" + b"\x00" * 40)
        with pytest.raises(datasets.CorruptHeaderError):
            datasets.load_image_dataset(path)

    def test_truncated_payload(self, tmp_path):
        data = self._dataset(3)
        path = tmp_path / "trunc.bin"
        datasets.write_image_dataset(data, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(datasets.TruncatedPayloadError):
            datasets.load_image_dataset(path)

    def test_label_out_of_range(self, tmp_path):
        data = self._dataset(2)
        path = tmp_path / "badlabel.bin"
        datasets.write_image_dataset(data, path)
        raw = bytearray(path.read_bytes())
        raw[28:32] = (99).to_bytes(4, "little")  # first label -> 99
        path.write_bytes(bytes(raw))
        with pytest.raises(datasets.LabelRangeError):
            datasets.load_image_dataset(path)


class TestCifarLoader:
    def _write_fake_batches(self, directory, per_batch=5):
        rng = np.random.default_rng(3)
        for name in datasets._CIFAR_FILES:
            records = np.zeros((per_batch, 3073), dtype=np.uint8)
            records[:, 0] = rng.integers(0, 10, size=per_batch)
            records[:, 1:] = rng.integers(0, 256, size=(per_batch, 3072))
            (directory / name).write_bytes(records.tobytes())

    def test_loads_standard_record_layout(self, tmp_path):
        self._write_fake_batches(tmp_path, per_batch=5)
        data = datasets.load_cifar10(tmp_path)
        assert len(data) == 30
        assert data.inputs.shape == (30, 3, 32, 32)
        assert data.class_count == 10
        assert data.inputs.min() >= 0.0 and data.inputs.max() <= 1.0

    def test_bad_record_size(self, tmp_path):
        self._write_fake_batches(tmp_path)
        name = datasets._CIFAR_FILES[0]
        raw = (tmp_path / name).read_bytes()
        (tmp_path / name).write_bytes(raw[:-10])
        with pytest.raises(datasets.TruncatedPayloadError):
            datasets.load_cifar10(tmp_path)
