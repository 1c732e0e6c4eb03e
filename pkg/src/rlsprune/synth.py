"""Deterministic synthetic datasets in the on-disk formats the loaders read.

Writes IDX image/label pairs (digit-like 28x28 glyphs under random shift and
noise) and CIFAR-layout binary batches (per-class color patterns plus noise).
Useful for demos and tests in environments without the real datasets.
"""

import argparse
import os
import struct

import numpy as np

# 7x5 digit glyphs, scaled up onto the 28x28 canvas
_GLYPHS = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],  # 0
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],  # 1
    ["01110", "10001", "00001", "00110", "01000", "10000", "11111"],  # 2
    ["01110", "10001", "00001", "00110", "00001", "10001", "01110"],  # 3
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],  # 4
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],  # 5
    ["01110", "10000", "10000", "11110", "10001", "10001", "01110"],  # 6
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],  # 7
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],  # 8
    ["01110", "10001", "10001", "01111", "00001", "00001", "01110"],  # 9
]


def _glyph_image(digit, scale=3):
    rows = _GLYPHS[digit]
    bitmap = np.array([[int(ch) for ch in row] for row in rows], dtype=np.float64)
    return np.kron(bitmap, np.ones((scale, scale)))  # 21 x 15


def make_digit_arrays(n, seed=0, noise=0.12, max_shift=3):
    """(images uint8 N x 28 x 28, labels uint8 N) with shift + noise variation."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.zeros((n, 28, 28), dtype=np.float64)
    for i, lab in enumerate(labels):
        glyph = _glyph_image(int(lab)) * rng.uniform(0.7, 1.0)
        gh, gw = glyph.shape
        top = (28 - gh) // 2 + rng.integers(-max_shift, max_shift + 1)
        left = (28 - gw) // 2 + rng.integers(-max_shift, max_shift + 1)
        images[i, top : top + gh, left : left + gw] = glyph
    images += rng.normal(0.0, noise, size=images.shape)
    images = np.clip(images, 0.0, 1.0)
    return (images * 255).round().astype(np.uint8), labels.astype(np.uint8)


def make_cifar_arrays(n, seed=0, noise=0.15, pattern_seed=1):
    """(images uint8 N x 3 x 32 x 32, labels uint8 N), one color pattern per class.

    pattern_seed fixes the per-class patterns independently of the sampling
    seed so that train and test splits describe the same task.
    """
    rng = np.random.default_rng(seed)
    patterns = np.random.default_rng(pattern_seed).uniform(0.1, 0.9, size=(10, 3, 32, 32))
    labels = rng.integers(0, 10, size=n)
    images = patterns[labels] * rng.uniform(0.7, 1.0, size=(n, 1, 1, 1))
    images += rng.normal(0.0, noise, size=images.shape)
    images = np.clip(images, 0.0, 1.0)
    return (images * 255).round().astype(np.uint8), labels.astype(np.uint8)


def write_idx_images(path, images):
    n, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x00000803, n, h, w))
        fh.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", 0x00000801, len(labels)))
        fh.write(labels.astype(np.uint8).tobytes())


def write_cifar_binary(path, images, labels):
    n = images.shape[0]
    records = np.empty((n, 3073), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = images.reshape(n, -1)
    with open(path, "wb") as fh:
        fh.write(records.tobytes())


def write_mnist_style(out_dir, train_n=12000, test_n=2000, seed=0):
    os.makedirs(out_dir, exist_ok=True)
    imgs, labels = make_digit_arrays(train_n, seed=seed)
    write_idx_images(os.path.join(out_dir, "train-images-idx3-ubyte"), imgs)
    write_idx_labels(os.path.join(out_dir, "train-labels-idx1-ubyte"), labels)
    imgs, labels = make_digit_arrays(test_n, seed=seed + 1)
    write_idx_images(os.path.join(out_dir, "t10k-images-idx3-ubyte"), imgs)
    write_idx_labels(os.path.join(out_dir, "t10k-labels-idx1-ubyte"), labels)


def write_cifar_style(out_dir, train_n=2000, test_n=500, seed=0):
    os.makedirs(out_dir, exist_ok=True)
    imgs, labels = make_cifar_arrays(train_n, seed=seed, pattern_seed=seed + 1)
    write_cifar_binary(os.path.join(out_dir, "data_batch_1.bin"), imgs, labels)
    imgs, labels = make_cifar_arrays(test_n, seed=seed + 1000, pattern_seed=seed + 1)
    write_cifar_binary(os.path.join(out_dir, "test_batch.bin"), imgs, labels)


def main(argv=None):
    parser = argparse.ArgumentParser(description="Generate synthetic datasets")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--format", choices=["idx", "cifar"], default="idx")
    parser.add_argument("--train-n", type=int, default=12000)
    parser.add_argument("--test-n", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if args.format == "idx":
        write_mnist_style(args.out, args.train_n, args.test_n, args.seed)
    else:
        write_cifar_style(args.out, args.train_n, args.test_n, args.seed)


if __name__ == "__main__":
    main()
