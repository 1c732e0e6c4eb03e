import struct

import numpy as np
import pytest

from rlsprune import data, synth
from rlsprune.errors import DimensionError, FormatError


def write_idx_pair(tmp_path, images, labels, prefix=""):
    """Independent hand-rolled IDX writer (separate from synth's)."""
    ipath = tmp_path / f"{prefix}imgs"
    lpath = tmp_path / f"{prefix}labels"
    n, h, w = images.shape
    with open(ipath, "wb") as fh:
        fh.write(struct.pack(">i", 0x00000803))
        fh.write(struct.pack(">iii", n, h, w))
        fh.write(bytes(images.reshape(-1).tolist()))
    with open(lpath, "wb") as fh:
        fh.write(struct.pack(">i", 0x00000801))
        fh.write(struct.pack(">i", n))
        fh.write(bytes(labels.tolist()))
    return str(ipath), str(lpath)


class TestMnistIdx:
    def test_roundtrip_handcrafted_file(self, tmp_path, rng):
        images = rng.integers(0, 256, size=(3, 4, 4)).astype(np.uint8)
        labels = np.array([1, 0, 9], dtype=np.uint8)
        ds = data.load_mnist_idx(*write_idx_pair(tmp_path, images, labels))
        assert ds.images.shape == (3, 1, 4, 4)
        assert np.array_equal(ds.labels, [1, 0, 9])
        assert np.allclose(ds.images[:, 0], images / 255.0)

    def test_pixel_255_becomes_one(self, tmp_path):
        images = np.full((1, 2, 2), 255, dtype=np.uint8)
        ds = data.load_mnist_idx(*write_idx_pair(tmp_path, images,
                                                 np.array([4], dtype=np.uint8)))
        assert np.all(ds.images == 1.0)

    def test_count_mismatch(self, tmp_path, rng):
        images = rng.integers(0, 256, size=(2, 3, 3)).astype(np.uint8)
        ipath, _ = write_idx_pair(tmp_path, images, np.zeros(2, dtype=np.uint8))
        _, lpath = write_idx_pair(tmp_path,
                                  rng.integers(0, 256, (3, 3, 3)).astype(np.uint8),
                                  np.zeros(3, dtype=np.uint8), prefix="b_")
        with pytest.raises(FormatError):
            data.load_mnist_idx(ipath, lpath)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">iiii", 0x12345678, 1, 2, 2) + b"\x00" * 4)
        with pytest.raises(FormatError, match="magic"):
            data.load_mnist_idx(str(path), str(path))

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "short"
        path.write_bytes(struct.pack(">iiii", 0x00000803, 2, 3, 3) + b"\x00" * 5)
        with pytest.raises(FormatError):
            data.load_mnist_idx(str(path), str(path))

    def test_synth_generator_roundtrip(self, tmp_path):
        synth.write_mnist_style(str(tmp_path), train_n=50, test_n=10, seed=3)
        ds = data.load_mnist_idx(str(tmp_path / "train-images-idx3-ubyte"),
                                 str(tmp_path / "train-labels-idx1-ubyte"))
        assert ds.size == 50
        assert ds.images.shape == (50, 1, 28, 28)
        assert ds.labels.min() >= 0 and ds.labels.max() <= 9
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


class TestCifarBinary:
    def test_single_zero_record(self, tmp_path):
        path = tmp_path / "batch.bin"
        record = bytes([7]) + b"\x00" * 3072
        path.write_bytes(record)
        ds = data.load_cifar_binary([str(path)])
        assert ds.size == 1
        assert ds.labels[0] == 7
        assert np.all(ds.images == 0.0)

    def test_channel_major_layout(self, tmp_path):
        # red plane all 255, green/blue zero
        pixels = bytes([255] * 1024 + [0] * 2048)
        (tmp_path / "batch.bin").write_bytes(bytes([1]) + pixels)
        ds = data.load_cifar_binary([str(tmp_path / "batch.bin")])
        assert np.all(ds.images[0, 0] == 1.0)
        assert np.all(ds.images[0, 1:] == 0.0)

    def test_truncated_names_file(self, tmp_path):
        path = tmp_path / "trunc.bin"
        path.write_bytes(b"\x00" * 5000)
        with pytest.raises(FormatError, match="trunc.bin"):
            data.load_cifar_binary([str(path)])

    def test_multiple_files_concatenate(self, tmp_path):
        synth.write_cifar_style(str(tmp_path), train_n=20, test_n=5, seed=1)
        ds = data.load_cifar_binary([str(tmp_path / "data_batch_1.bin"),
                                     str(tmp_path / "test_batch.bin")])
        assert ds.size == 25
        assert ds.images.shape == (25, 3, 32, 32)


class TestMinibatches:
    def _dataset(self, n=10):
        rng = np.random.default_rng(0)
        return data.Dataset(images=rng.random((n, 1, 2, 2)),
                            labels=rng.integers(0, 10, n))

    def test_same_seed_epoch_identical(self):
        ds = self._dataset()
        a = list(data.minibatches(ds, 3, seed=4, epoch=2))
        b = list(data.minibatches(ds, 3, seed=4, epoch=2))
        for (xa, ya), (xb, yb) in zip(a, b):
            assert np.array_equal(xa, xb) and np.array_equal(ya, yb)

    def test_different_epoch_differs(self):
        ds = self._dataset(50)
        a = np.concatenate([x for x, _ in data.minibatches(ds, 10, 1, 0)])
        b = np.concatenate([x for x, _ in data.minibatches(ds, 10, 1, 1)])
        assert not np.array_equal(a, b)

    def test_drop_last_arithmetic(self):
        batches = list(data.minibatches(self._dataset(10), 3, 0, 0))
        assert len(batches) == 3
        assert all(x.shape[0] == 3 for x, _ in batches)

    def test_one_hot_row(self):
        one = data.one_hot([4], 10)
        assert one.shape == (1, 10)
        assert one[0, 4] == 1.0 and one.sum() == 1.0

    def test_epoch_coverage(self):
        ds = self._dataset(10)
        seen = []
        for x, _ in data.minibatches(ds, 3, 7, 0):
            seen.extend(x.reshape(3, -1).tolist())
        assert len(seen) == 9
        uniq = {tuple(s) for s in seen}
        assert len(uniq) == 9  # no sample appears twice

    def test_batch_larger_than_dataset(self):
        with pytest.raises(DimensionError):
            next(data.minibatches(self._dataset(5), 6, 0, 0))


class TestInputMask:
    def test_identity_mask(self, rng):
        x = rng.random((3, 8))
        mask = data.InputMask(indices=np.arange(8), kind="feature")
        assert np.array_equal(data.apply_input_mask(x, mask), x)

    def test_singleton_feature(self, rng):
        x = rng.random((2, 1, 28, 28))
        mask = data.InputMask(indices=np.array([0]), kind="feature")
        got = data.apply_input_mask(x, mask)
        assert got.shape == (2, 1)
        assert np.array_equal(got[:, 0], x[:, 0, 0, 0])

    def test_matches_gather_oracle(self, rng):
        x = rng.random((4, 784))
        idx = np.sort(rng.choice(784, size=257, replace=False))
        mask = data.InputMask(indices=idx, kind="feature")
        got = data.apply_input_mask(x, mask)
        for r in range(4):
            for c, j in enumerate(idx):
                assert got[r, c] == x[r, j]

    def test_channel_mask(self, rng):
        x = rng.random((2, 3, 4, 4))
        mask = data.InputMask(indices=np.array([0, 2]), kind="channel")
        got = data.apply_input_mask(x, mask)
        assert got.shape == (2, 2, 4, 4)
        assert np.array_equal(got[:, 1], x[:, 2])

    def test_composition_is_intersection(self, rng):
        x = rng.random((2, 10))
        m1 = data.InputMask(indices=np.array([0, 2, 4, 6, 8]), kind="feature")
        m2 = data.InputMask(indices=np.array([1, 3]), kind="feature")  # of masked space
        once = data.apply_input_mask(data.apply_input_mask(x, m1), m2)
        direct = data.InputMask(indices=np.array([2, 6]), kind="feature")
        assert np.array_equal(once, data.apply_input_mask(x, direct))

    def test_out_of_range(self, rng):
        x = rng.random((2, 4))
        with pytest.raises(DimensionError):
            data.apply_input_mask(x, data.InputMask(np.array([9]), "feature"))
