"""Dataset ingestion and minibatch iteration.

Supports the MNIST IDX format (big-endian magic + extents + unsigned bytes)
and the CIFAR-10 binary format (3073-byte records, channel-major pixels).
Pixels are normalized to [0,1] with no mean subtraction.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor
from .errors import DimensionError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073


@dataclass
class Dataset:
    images: np.ndarray  # N x C x H x W, values in [0,1]
    labels: np.ndarray  # N class indices

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise FormatError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )

    @property
    def size(self):
        return self.images.shape[0]


@dataclass
class InputMask:
    indices: np.ndarray     # retained original feature/channel indices, ascending
    kind: str               # 'feature' (flattened pixels) or 'channel'


def _read_idx(path, expected_magic, expected_ndim):
    raw = open(path, "rb").read()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header at byte 0")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at byte 0")
    ndim = expected_ndim
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated extents at byte {len(raw)}")
    extents = struct.unpack(f">{ndim}i", raw[4:header])
    count = int(np.prod(extents))
    if len(raw) != header + count:
        raise FormatError(
            f"{path}: expected {header + count} bytes, got {len(raw)} (offset {header})"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(extents)


def load_mnist_idx(images_path, labels_path):
    """Load an IDX image/label file pair into a normalized Dataset."""
    imgs = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if imgs.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images_path}: {imgs.shape[0]} images vs {labels.shape[0]} labels"
        )
    n, h, w = imgs.shape
    images = imgs.astype(tensor.DTYPE).reshape(n, 1, h, w) / 255.0
    return Dataset(images=images, labels=labels.astype(np.int64))


def load_cifar_binary(paths):
    """Load one or more CIFAR-10 binary batch files (3073-byte records)."""
    all_images, all_labels = [], []
    for path in paths:
        raw = np.frombuffer(open(path, "rb").read(), dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES != 0:
            raise FormatError(
                f"{path}: length {raw.size} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = raw.reshape(-1, CIFAR_RECORD_BYTES)
        all_labels.append(records[:, 0].astype(np.int64))
        pixels = records[:, 1:].astype(tensor.DTYPE) / 255.0
        all_images.append(pixels.reshape(-1, 3, 32, 32))
    return Dataset(images=np.concatenate(all_images), labels=np.concatenate(all_labels))


def one_hot(labels, num_classes):
    out = np.zeros((len(labels), num_classes), dtype=tensor.DTYPE)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def minibatches(dataset, m, seed, epoch, num_classes=10):
    """Seeded per-epoch permutation into exact-size batches (short tail dropped)."""
    n = dataset.size
    if m > n:
        raise DimensionError(f"batch size {m} exceeds dataset size {n}")
    rng = np.random.default_rng([seed, epoch])
    perm = rng.permutation(n)
    for start in range(0, n - m + 1, m):
        idx = perm[start : start + m]
        yield dataset.images[idx], one_hot(dataset.labels[idx], num_classes)


def apply_input_mask(x, mask):
    """Retain only the masked features (flattened) or channels of a batch."""
    if mask is None:
        return x
    indices = np.asarray(mask.indices, dtype=np.intp)
    if mask.kind == "channel":
        if indices.size and indices.max() >= x.shape[1]:
            raise DimensionError(f"channel mask index {indices.max()} out of range")
        return x[:, indices]
    flat = x.reshape(x.shape[0], -1)
    if indices.size and indices.max() >= flat.shape[1]:
        raise DimensionError(f"feature mask index {indices.max()} out of range")
    return flat[:, indices]
