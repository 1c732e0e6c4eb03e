"""Dense tensor primitives: matmul, flattening, receptive-field extraction.

Everything operates on plain numpy arrays in row-major order. The default
element type is float64; switch DTYPE to float32 for a reduced-precision
build (all shipped tests assume float64).
"""

import numpy as np

from .errors import DimensionError

DTYPE = np.float64


def as_tensor(x):
    """Coerce to a contiguous array of the package dtype."""
    return np.ascontiguousarray(x, dtype=DTYPE)


def matmul(a, b):
    """Matrix product of two 2-D arrays with explicit shape checking."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents disagree: {a.shape} x {b.shape}")
    return a @ b


def flatten(x):
    """Row-major linearization of any tensor into a 1-D vector."""
    return np.asarray(x).reshape(-1)


def conv_output_extent(in_extent, kernel, stride):
    """Valid-convolution output extent; raises if the window does not fit evenly."""
    span = in_extent - kernel
    if span < 0 or span % stride != 0:
        raise DimensionError(
            f"window {kernel} stride {stride} does not tile extent {in_extent}"
        )
    return span // stride + 1


def extract_receptive_fields(x, kernel, stride=1):
    """im2col: stack every input patch of a 4-D batch as a matrix row.

    x has shape (M, C, H', W'). The result has one row per (sample, out_row,
    out_col) position, in that order, each row being the C x kh x kw patch
    flattened channel-major then kernel-row-major. Shape: (M*U*V, C*kh*kw).
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise DimensionError(f"expected 4-D input, got shape {x.shape}")
    m, c, hin, win = x.shape
    kh, kw = kernel
    u = conv_output_extent(hin, kh, stride)
    v = conv_output_extent(win, kw, stride)
    # (M, C, U, V, kh, kw) strided view, then rows ordered (m, u, v)
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(m * u * v, c * kh * kw)
    return np.ascontiguousarray(cols)


def fold_receptive_fields(cols, input_shape, kernel, stride=1):
    """Adjoint of extract_receptive_fields: scatter-add rows back to a 4-D tensor.

    Used by the convolution backward pass to turn per-patch gradients into an
    input gradient. Overlapping patches accumulate.
    """
    m, c, hin, win = input_shape
    kh, kw = kernel
    u = conv_output_extent(hin, kh, stride)
    v = conv_output_extent(win, kw, stride)
    if cols.shape != (m * u * v, c * kh * kw):
        raise DimensionError(
            f"column matrix {cols.shape} does not match input shape {input_shape}"
        )
    patches = cols.reshape(m, u, v, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros(input_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + u * stride : stride, j : j + v * stride : stride] += patches[:, :, i, j]
    return out
